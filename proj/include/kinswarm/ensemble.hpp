// Time integrators for the first-order particle system dz/dt = E(z) and the
// inertial system dz/dt = u, eps du/dt = -u + E(z), plus snapshot CSV I/O.

#ifndef KINSWARM_ENSEMBLE_HPP
#define KINSWARM_ENSEMBLE_HPP

#include "kinswarm/kernels.hpp"
#include "kinswarm/state.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace kinswarm {

enum class Scheme { Euler, Rk4, ExpEuler, Strang };

std::string_view to_string(Scheme scheme) noexcept;
Scheme parse_scheme(std::string_view name); // throws ConfigInvalid

struct IntegratorConfig {
    Scheme scheme = Scheme::Rk4;
    double dt = 1e-3;
    double epsilon = 1.0; // second order only
};

/// Coefficients of one exponential-Euler step of length dt at inertia eps:
/// u+ = decay u + relax E, z+ = z + drift_u u + drift_e E.
struct ExpEulerCoefficients {
    double decay = 1.0;
    double relax = 0.0;
    double drift_u = 0.0;
    double drift_e = 0.0;
};

ExpEulerCoefficients exp_euler_coefficients(double dt, double epsilon);

/// E_i at every particle of every species, skipping singular self-pairs.
std::vector<std::vector<double>> particle_fields(const KernelMatrix& kernels, const MultiSpeciesState& state);

/// Maps a positions-only state to per-species fields at its particles.
using FieldEvaluator = std::function<std::vector<std::vector<double>>(const MultiSpeciesState& positions)>;

MultiSpeciesState step_first_order(const MultiSpeciesState& state, const KernelMatrix& kernels,
                                   const IntegratorConfig& cfg);
MultiSpeciesState step_second_order(const MultiSpeciesState& state, const KernelMatrix& kernels,
                                    const IntegratorConfig& cfg);
/// Same steps with a caller-supplied field in place of direct summation.
MultiSpeciesState step_first_order(const MultiSpeciesState& state, const FieldEvaluator& field,
                                   const IntegratorConfig& cfg);
MultiSpeciesState step_second_order(const MultiSpeciesState& state, const FieldEvaluator& field,
                                    const IntegratorConfig& cfg);

/// Largest phase-space norm |(x, v)| over all particles (|x| without velocities).
double support_radius(const MultiSpeciesState& state);

/// Snapshot CSV: header `species,index,weight,x0..[,v0..]`, 17 significant digits.
void write_snapshot_csv(std::ostream& out, const MultiSpeciesState& state);
void write_snapshot_csv(const std::string& path, const MultiSpeciesState& state);
MultiSpeciesState read_snapshot_csv(std::istream& in, double time = 0.0);
MultiSpeciesState read_snapshot_csv(const std::string& path, double time = 0.0);

} // namespace kinswarm

#endif
