// The two shipped benchmark configurations, also available as
// configs/gaussian_benchmark.toml and configs/singular_benchmark.toml.
#ifndef KINSWARM_BENCHMARKS_HPP
#define KINSWARM_BENCHMARKS_HPP

#include "kinswarm/config.hpp"

#include <string_view>

namespace kinswarm {

std::string_view gaussian_benchmark_toml();
std::string_view singular_benchmark_toml();

SweepConfig gaussian_benchmark();
SweepConfig singular_benchmark();

} // namespace kinswarm

#endif
