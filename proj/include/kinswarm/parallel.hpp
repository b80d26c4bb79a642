// Static-partition parallel loops.
//
// Work is split into contiguous index ranges, one per worker. Callers only
// write to disjoint outputs indexed by the loop variable, so results never
// depend on the worker count.

#ifndef KINSWARM_PARALLEL_HPP
#define KINSWARM_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace kinswarm {

/// Environment variable consulted for the default worker cap.
inline constexpr const char* kWorkersEnv = "KINSWARM_WORKERS";

std::size_t worker_count();

/// Overrides the environment default; 0 restores it.
void set_worker_count(std::size_t workers);

/// Runs body(begin, end) over [0, n) split into at most worker_count() ranges.
/// The first exception (lowest range) is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 16);

} // namespace kinswarm

#endif
