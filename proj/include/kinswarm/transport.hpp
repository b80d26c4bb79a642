// Empirical measures, 1-Wasserstein distances, moments, and mollification
// of point clouds onto uniform grids.

#ifndef KINSWARM_TRANSPORT_HPP
#define KINSWARM_TRANSPORT_HPP

#include "kinswarm/state.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace kinswarm {

/// Weighted point cloud in R^m; weights positive and summing to one.
class EmpiricalMeasure
{
public:
    EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights);

    static EmpiricalMeasure dirac(std::vector<double> point);
    static EmpiricalMeasure uniform(std::size_t dim, std::vector<double> points);
    /// Positions only (m = d), or (x, v) concatenated per particle (m = 2d).
    static EmpiricalMeasure from_species(const SpeciesEnsemble& species, bool phase_space = false);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return weights_.size(); }
    std::span<const double> point(std::size_t k) const { return {points_.data() + k * dim_, dim_}; }
    double weight(std::size_t k) const { return weights_[k]; }
    const std::vector<double>& points() const noexcept { return points_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

private:
    std::size_t dim_;
    std::vector<double> points_;
    std::vector<double> weights_;
};

inline constexpr std::size_t kDefaultW1SizeCap = 4096;

double w1_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Exact discrete optimal transport with cost |x - y| (successive shortest
/// paths on the bipartite support graph). Ties resolve to the lowest index.
double w1_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t size_cap = kDefaultW1SizeCap);

/// Mean of w1_1d over L random projections; direction l draws from a
/// generator seeded with (seed, l). Equals w1_1d when m = 1.
double w1_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t directions,
                 std::uint64_t seed);

enum class W1Method { Exact, OneD, Sliced };

W1Method parse_w1_method(std::string_view name); // throws ConfigInvalid
std::string_view to_string(W1Method method) noexcept;

struct W1Options {
    W1Method method = W1Method::Exact;
    std::size_t directions = 64;
    std::uint64_t seed = 0;
    std::size_t size_cap = kDefaultW1SizeCap;
};

double w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const W1Options& options = {});

/// Sum over species of per-species W1.
double w1_multispecies(std::span<const EmpiricalMeasure> f, std::span<const EmpiricalMeasure> g,
                       const W1Options& options = {});

double moment(const EmpiricalMeasure& mu, int p);

/// Normalization of the bump exp(-1/(1-x^2)) on [-1, 1].
inline constexpr double kBumpIntegral1D = 0.44399381616807943782;

/// gamma_n(x) = n^m gamma_1(n x), gamma_1 = c exp(-1/(1-|x|^2)) on the unit ball.
struct Mollifier {
    int n = 1;
    std::size_t dim = 1;

    double radius() const { return 1.0 / n; }
    double operator()(std::span<const double> x) const;
    /// Integral of exp(-1/(1-|x|^2)) over the unit ball of R^m.
    static double bump_integral(std::size_t dim);
};

/// Axis-aligned grid of cubic cells, row-major with axis 0 slowest.
struct UniformGrid {
    std::size_t dim = 1;
    std::vector<double> lower;
    double dx = 1.0;
    std::vector<std::size_t> cells;

    static UniformGrid line(double x_min, double dx, std::size_t cells);
    std::size_t total_cells() const;
    double cell_volume() const;
    double center(std::size_t axis, std::size_t index) const { return lower[axis] + (index + 0.5) * dx; }
};

/// Cell averages of sum_k w_k gamma_n(x - x_k); discrete mass is one.
std::vector<double> mollify_to_grid(const EmpiricalMeasure& mu, const Mollifier& moll, const UniformGrid& grid);

} // namespace kinswarm

#endif
