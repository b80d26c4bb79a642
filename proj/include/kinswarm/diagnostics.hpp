// Functionals evaluated along trajectories: velocity alignment, free and
// interaction energies, second moments, grid L^p norms and the modulated
// kinetic plus interaction energy against a macroscopic reference.

#ifndef KINSWARM_DIAGNOSTICS_HPP
#define KINSWARM_DIAGNOSTICS_HPP

#include "kinswarm/kernels.hpp"
#include "kinswarm/macro.hpp"
#include "kinswarm/state.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace kinswarm {

/// Named scalar channels sharing a strictly increasing time axis.
class DiagnosticsSeries
{
public:
    void declare(const std::string& name, const std::string& unit);
    /// Appends one row; every declared channel must be present.
    void append(double t, const std::map<std::string, double>& row);

    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::string& unit(const std::string& name) const;
    const std::vector<double>& channel(const std::string& name) const;
    bool has(const std::string& name) const { return columns_.count(name) != 0; }
    std::size_t rows() const noexcept { return times_.size(); }

    /// CSV `t,<channels...>` with 17 significant digits.
    std::string to_csv() const;
    /// JSON sidecar naming channels, units and the config hash.
    std::string sidecar_json(const std::string& config_hash) const;

private:
    std::vector<double> times_;
    std::vector<std::string> names_;
    std::map<std::string, std::string> units_;
    std::map<std::string, std::vector<double>> columns_;
};

/// I_i = sum_k w_k |v_k + sum_j (grad K_ij * rho_j)(z_k)| for every species.
std::vector<double> velocity_alignment(const MultiSpeciesState& state, const KernelMatrix& kernels);
/// Same with the fields E_i at the particles supplied by the caller.
std::vector<double> velocity_alignment(const MultiSpeciesState& state,
                                       const std::vector<std::vector<double>>& fields);

struct EnergyOptions {
    bool skip_self = true; // drop coincident pairs of singular kernels
};

/// sum_ij sum_kh w_ik w_jh K_ij(z_ik - z_jh).
double free_energy(const MultiSpeciesState& state, const KernelMatrix& kernels, EnergyOptions options = {});

/// Double sum of K over one species.
double interaction_energy(const MultiSpeciesState& state, std::size_t species, const KernelSpec& kernel,
                          EnergyOptions options = {});

/// Per species sum_k w_k (|z_k|^2 + |v_k|^2) / 2.
std::vector<double> second_moment_energy(const MultiSpeciesState& state);

/// Volume-weighted discrete L^p norm of cell values; p = infinity gives the max.
double lp_norm(std::span<const double> values, double cell_volume, double p);
double lp_norm(const DensityGrid1D& density, std::size_t species, double p);

/// Exact double integral of K between piecewise-constant cell functions:
/// dx^2 sum_cc' a_c b_c' Kbar(c - c'), Kbar the tent average of K over a cell pair.
class GridInteraction
{
public:
    GridInteraction(const KernelSpec& kernel, double dx, std::size_t cells);

    double form(std::span<const double> a, std::span<const double> b) const;
    double stencil(long offset) const { return table_[static_cast<std::size_t>(offset + static_cast<long>(cells_) - 1)]; }

private:
    double dx_;
    std::size_t cells_;
    std::vector<double> table_;
};

struct ModulatedEnergy {
    double kinetic_part = 0.0;
    double interaction_part = 0.0;
    double total = 0.0;
};

/// E_K of a kinetic state against a reference (rho, u) on a 1-D grid, where u
/// is the transport velocity of the reference (u = -sum_j grad K_ij * rho_j).
/// rho^eps is the kinetic state mollified onto the reference grid with
/// 1/n = 2 dx unless mollifier_n is given.
ModulatedEnergy modulated_energy(const MultiSpeciesState& kinetic, const DensityGrid1D& rho,
                                 const VelocityFieldSample& u, double epsilon, const KernelMatrix& kernels,
                                 int mollifier_n = 0);

/// Same with prebuilt interaction stencils (one per species).
ModulatedEnergy modulated_energy(const MultiSpeciesState& kinetic, const DensityGrid1D& rho,
                                 const VelocityFieldSample& u, double epsilon,
                                 std::span<const GridInteraction> stencils, int mollifier_n = 0);

/// Mollifier index tied to the grid: 1/n = 2 dx.
int grid_mollifier_index(double dx);

} // namespace kinswarm

#endif
