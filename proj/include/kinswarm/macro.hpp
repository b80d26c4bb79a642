// First-order macroscopic reference solutions: the particle method in any
// dimension and a conservative upwind finite-volume solver on a 1-D grid.
//
// Sign convention: u_i = sum_j grad K_ij * rho_j and d/dt rho_i = div(rho_i u_i),
// so densities are transported with velocity -u_i = E_i.

#ifndef KINSWARM_MACRO_HPP
#define KINSWARM_MACRO_HPP

#include "kinswarm/ensemble.hpp"
#include "kinswarm/kernels.hpp"
#include "kinswarm/state.hpp"
#include "kinswarm/transport.hpp"

#include <span>
#include <vector>

namespace kinswarm {

/// Cell averages of N species densities on [x_min, x_min + cells dx].
struct DensityGrid1D {
    double time = 0.0;
    double x_min = 0.0;
    double dx = 1.0;
    std::size_t cells = 0;
    std::vector<std::vector<double>> values; // N x cells

    std::size_t species() const noexcept { return values.size(); }
    double center(std::size_t c) const { return x_min + (static_cast<double>(c) + 0.5) * dx; }
    double mass(std::size_t i) const;
    UniformGrid grid() const { return UniformGrid::line(x_min, dx, cells); }
    bool same_grid(const DensityGrid1D& other) const;

    /// Mollified cell averages of a positions-only state (one row per species).
    static DensityGrid1D from_particles(const MultiSpeciesState& state, double x_min, double dx, std::size_t cells,
                                        int mollifier_n);
};

/// Per-species samples of a velocity-like field. On a grid (dx > 0) entry c
/// sits at x_min + (c + 1/2) dx; otherwise the samples belong to query points.
struct VelocityFieldSample {
    double x_min = 0.0;
    double dx = 0.0;
    std::vector<std::vector<double>> values;

    bool on_grid() const noexcept { return dx > 0.0; }
    /// Piecewise-linear interpolation in x (d = 1, grid samples), clamped at the ends.
    double interpolate(std::size_t species, double x) const;
};

/// u_i(x_q) on an ensemble: exactly the negation of assemble_field.
std::vector<double> velocity_field(const MultiSpeciesState& rho, const KernelMatrix& kernels, std::size_t species,
                                   std::span<const double> queries);

/// u_i(x_q) on a 1-D grid by midpoint quadrature; the cell holding a query is
/// skipped for singular kernels (principal value, zero by oddness).
std::vector<double> velocity_field(const DensityGrid1D& rho, const KernelMatrix& kernels, std::size_t species,
                                   std::span<const double> queries);

/// u_i at every cell center of the grid, for all species.
VelocityFieldSample velocity_on_grid(const DensityGrid1D& rho, const KernelMatrix& kernels);

/// Particle-in-cell field for d = 1: particles are mollified onto the grid
/// (1/n = 2 dx unless given), u is taken from velocity_on_grid and
/// E_i(x) = -u_i(x) by linear interpolation. Bounded for every admissible
/// kernel, unlike direct summation of low-order regularized Riesz forces.
FieldEvaluator grid_particle_field(const KernelMatrix& kernels, double x_min, double dx, std::size_t cells,
                                   int mollifier_n = 0);

std::vector<MultiSpeciesState> macro_particle_solve(const MultiSpeciesState& rho0, const KernelMatrix& kernels,
                                                    double horizon, double dt, Scheme scheme = Scheme::Rk4,
                                                    std::size_t stride = 1);

struct GridSolveOptions {
    std::size_t stride = 1; // keep every stride-th step (the final state is always kept)
    double cfl = 0.5;
};

std::vector<DensityGrid1D> grid_solve_1d(const DensityGrid1D& rho0, const KernelMatrix& kernels, double horizon,
                                         double dt, const GridSolveOptions& options = {});

/// e_i = (u_now - u_prev) / dt + u_now d/dx u_now (central differences inside,
/// one-sided at the two ends).
VelocityFieldSample material_derivative(const VelocityFieldSample& u_now, const VelocityFieldSample& u_prev,
                                        double dt);

} // namespace kinswarm

#endif
