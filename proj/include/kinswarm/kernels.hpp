// Interaction potentials K_ij, their gradients, regularization, Lipschitz
// bounds, and the nonlocal field E_i = -sum_j grad K_ij * rho_j on particles.

#ifndef KINSWARM_KERNELS_HPP
#define KINSWARM_KERNELS_HPP

#include "kinswarm/state.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace kinswarm {

struct ZeroKernel {};

/// K(x) = a |x|^2 / 2.
struct QuadraticKernel {
    double a = 1.0;
};

/// K(x) = -C_a exp(-|x|/l_a) + C_r exp(-|x|/l_r).
struct MorseKernel {
    double c_att = 1.0;
    double l_att = 1.0;
    double c_rep = 0.0;
    double l_rep = 1.0;
};

/// K(x) = -C_a exp(-|x|^2/l_a) + C_r exp(-|x|^2/l_r).
struct GaussianKernel {
    double c_att = 1.0;
    double l_att = 1.0;
    double c_rep = 0.0;
    double l_rep = 1.0;
};

/// K(x) = C / |x|^alpha, singular at the origin.
struct RieszKernel {
    double c = 1.0;
    double alpha = 1.0;
};

/// K(x) = C / (|x|^alpha + delta).
struct RegularizedRieszKernel {
    double c = 1.0;
    double alpha = 1.0;
    double delta = 1.0;
};

using KernelSpec = std::variant<ZeroKernel, QuadraticKernel, MorseKernel, GaussianKernel, RieszKernel,
                                RegularizedRieszKernel>;

bool is_singular(const KernelSpec& spec) noexcept;
inline bool is_smooth(const KernelSpec& spec) noexcept { return !is_singular(spec); }
std::string describe(const KernelSpec& spec);

/// Radial profile helpers. grad_factor returns s with grad K(x) = s * x,
/// taking |x|^2; at the origin it is 0 for every non-Riesz variant.
double potential_at_r2(const KernelSpec& spec, double r2);
double grad_factor(const KernelSpec& spec, double r2);

double eval_potential(const KernelSpec& spec, std::span<const double> x, std::size_t dim);
std::vector<double> eval_grad(const KernelSpec& spec, std::span<const double> x, std::size_t dim);

struct Regularized {
    KernelSpec spec;
    bool unchanged = false; // input was already smooth and is returned as-is
};

Regularized regularize(const KernelSpec& spec, double delta);

/// N x N matrix of kernels in ambient dimension d, validated on construction.
/// Off-diagonal entries must be smooth; diagonals may be Riesz with 0 < alpha < d.
class KernelMatrix
{
public:
    KernelMatrix(std::size_t dim, std::size_t species, std::vector<KernelSpec> entries);

    static KernelMatrix uniform(std::size_t dim, std::size_t species, const KernelSpec& spec);
    static KernelMatrix zero(std::size_t dim, std::size_t species);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t species() const noexcept { return species_; }
    const KernelSpec& operator()(std::size_t i, std::size_t j) const { return entries_[i * species_ + j]; }
    const std::vector<KernelSpec>& entries() const noexcept { return entries_; }

    bool is_symmetric() const;
    bool has_singular() const;
    bool is_zero() const;

    /// Replaces every singular diagonal by its delta-regularization.
    KernelMatrix regularized(double delta) const;

private:
    std::size_t dim_;
    std::size_t species_;
    std::vector<KernelSpec> entries_;
};

struct KernelBounds {
    double xi = 0.0;      // sum_ij sup_{|x| <= 2R} |grad K_ij|
    double upsilon = 0.0; // sum_ij Lip_{2R}(grad K_ij)
    double radius = 0.0;
    // True when a gradient Lipschitz constant was taken on the punctured ball
    // (Morse, low-order regularized Riesz); infinite values flag true blow-up.
    bool punctured = false;
};

/// Radial mesh used where no closed form is implemented.
inline constexpr std::size_t kBoundsSamples = 10000;

KernelBounds kernel_bounds(const KernelMatrix& matrix, double radius);

struct FieldOptions {
    bool skip_self = true; // drop zero-distance pairs of singular kernels
};

/// E_i(x_q) = -sum_j sum_h w_{j,h} grad K_ij(x_q - z_{j,h}) for each query.
/// Queries are row-major (Q x d); the result has the same shape. Each query
/// sums species-major in ascending particle order, so the output does not
/// depend on the worker count.
std::vector<double> assemble_field(const KernelMatrix& matrix, const MultiSpeciesState& sources,
                                   std::size_t species, std::span<const double> queries,
                                   FieldOptions options = {});

} // namespace kinswarm

#endif
