// Measure solutions of the kinetic equation as push-forwards along the
// characteristic flow dX = V dt, eps dV = (-V + E(t, X)) dt, and the Picard
// iteration f <- T_{E[f]} # f0 that constructs them.

#ifndef KINSWARM_KINETIC_HPP
#define KINSWARM_KINETIC_HPP

#include "kinswarm/kernels.hpp"
#include "kinswarm/state.hpp"
#include "kinswarm/transport.hpp"

#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace kinswarm {

struct PhasePoint {
    std::vector<double> x;
    std::vector<double> v;
};

/// Field evaluator (t, species, points Q x d) -> values Q x d. The growth and
/// Lipschitz constants are declarations carried for diagnostics, not checked.
struct FieldFn {
    using Eval = std::function<std::vector<double>(double t, std::size_t species, std::span<const double> points)>;

    std::size_t dim = 1;
    Eval eval;
    double growth = std::numeric_limits<double>::infinity();
    double lipschitz = std::numeric_limits<double>::infinity();

    static FieldFn zero(std::size_t dim);
    static FieldFn constant(std::vector<double> value);
    /// Autonomous field E_i[state] generated by frozen sources.
    static FieldFn frozen(const KernelMatrix& kernels, const MultiSpeciesState& sources);
};

/// Exponential-Euler characteristic flow over [0, t] using ceil(t/dt) equal steps.
PhasePoint flow_map(const FieldFn& field, double epsilon, const PhasePoint& p0, double t, double dt,
                    std::size_t species = 0);

/// Applies flow_map to every support point of a measure on R^{2d}; weights are kept.
EmpiricalMeasure pushforward(const FieldFn& field, double epsilon, const EmpiricalMeasure& f0, double t, double dt,
                             std::size_t species = 0);

struct PicardConfig {
    double tol = 1e-8;
    std::size_t max_iter = 50;
    double dt = 1e-3;
    double horizon = 1.0;
    double window = 0.0;      // restart length; 0 runs one window over the horizon
    std::size_t samples = 32; // comparison times per window
    W1Options metric{};
};

struct PicardWindow {
    double t0 = 0.0;
    double t1 = 0.0;
    std::vector<double> distances; // sup-W1 between consecutive iterates
};

struct PicardResult {
    std::vector<MultiSpeciesState> trajectory; // t = 0 and every sample time
    std::vector<PicardWindow> windows;
};

PicardResult picard_solve(const MultiSpeciesState& f0, const KernelMatrix& kernels, double epsilon,
                          const PicardConfig& cfg);
PicardResult picard_solve(std::span<const EmpiricalMeasure> f0, const KernelMatrix& kernels, double epsilon,
                          const PicardConfig& cfg);

/// Rebuilds a velocity-carrying state from phase-space measures on R^{2d}.
MultiSpeciesState state_from_phase_measures(std::span<const EmpiricalMeasure> measures, double time = 0.0);

/// Sum over species of phase-space W1 between two states with velocities.
double phase_w1(const MultiSpeciesState& f, const MultiSpeciesState& g, const W1Options& options = {});

/// C(T) * Upsilon with C(T) = (exp(C2 T) - 1) / (eps C2), C2 = 1 + (1 + Upsilon) / eps.
double contraction_factor(double upsilon, double epsilon, double window);

struct StabilitySeries {
    std::vector<double> times;
    std::vector<double> ratio; // W1(f(t), g(t)) / W1(f0, g0)
};

StabilitySeries stability_ratio(const MultiSpeciesState& f0, const MultiSpeciesState& g0,
                                const KernelMatrix& kernels, double epsilon, const PicardConfig& cfg);

} // namespace kinswarm

#endif
