#include "kinswarm/kinetic.hpp"

#include "kinswarm/ensemble.hpp"
#include "kinswarm/error.hpp"
#include "kinswarm/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace kinswarm {

FieldFn FieldFn::zero(std::size_t dim)
{
    FieldFn f;
    f.dim = dim;
    f.eval = [](double, std::size_t, std::span<const double> pts) { return std::vector<double>(pts.size(), 0.0); };
    f.growth = 0.0;
    f.lipschitz = 0.0;
    return f;
}

FieldFn FieldFn::constant(std::vector<double> value)
{
    FieldFn f;
    f.dim = value.size();
    double norm = 0.0;
    for (double v : value)
        norm += v * v;
    f.growth = std::sqrt(norm);
    f.lipschitz = 0.0;
    f.eval = [value = std::move(value)](double, std::size_t, std::span<const double> pts) {
        std::vector<double> out(pts.size());
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = value[k % value.size()];
        return out;
    };
    return f;
}

FieldFn FieldFn::frozen(const KernelMatrix& kernels, const MultiSpeciesState& sources)
{
    FieldFn f;
    f.dim = kernels.dim();
    f.eval = [kernels, sources = sources.positions_only()](double, std::size_t species, std::span<const double> pts) {
        return assemble_field(kernels, sources, species, pts);
    };
    return f;
}

namespace {

std::vector<double> evaluate(const FieldFn& field, double t, std::size_t species, std::span<const double> pts)
{
    std::vector<double> e;
    try {
        e = field.eval(t, species, pts);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& ex) {
        throw Error(ErrorKind::FieldEvaluationFailure, ex.what());
    }
    if (e.size() != pts.size())
        throw Error(ErrorKind::FieldEvaluationFailure,
                    fmt::format("field returned {} values for {} coordinates", e.size(), pts.size()));
    for (double v : e)
        if (!std::isfinite(v))
            throw Error(ErrorKind::FieldEvaluationFailure, fmt::format("non-finite field value at t = {}", t));
    return e;
}

std::size_t step_count(double t, double dt)
{
    if (t == 0.0)
        return 0;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t / dt - 1e-9)));
}

void check_flow_args(double epsilon, double t, double dt)
{
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw Error(ErrorKind::InvalidState, "epsilon must be positive and finite");
    if (!(t >= 0.0) || !std::isfinite(t))
        throw Error(ErrorKind::InvalidState, "flow time must be nonnegative and finite");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw Error(ErrorKind::InvalidState, "dt must be positive and finite");
}

// Advances packed positions x and velocities v (Q x d each) in place.
void flow_packed(const FieldFn& field, double epsilon, std::vector<double>& x, std::vector<double>& v, double t,
                 double dt, std::size_t species)
{
    const std::size_t n = step_count(t, dt);
    if (n == 0)
        return;
    const double h = t / static_cast<double>(n);
    const ExpEulerCoefficients c = exp_euler_coefficients(h, epsilon);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> e = evaluate(field, h * static_cast<double>(s), species, x);
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k] += c.drift_u * v[k] + c.drift_e * e[k];
            v[k] = c.decay * v[k] + c.relax * e[k];
        }
    }
}

} // namespace

PhasePoint flow_map(const FieldFn& field, double epsilon, const PhasePoint& p0, double t, double dt,
                    std::size_t species)
{
    check_flow_args(epsilon, t, dt);
    if (p0.x.size() != field.dim || p0.v.size() != field.dim)
        throw Error(ErrorKind::DimensionMismatch, "phase point does not match the field dimension");
    PhasePoint p = p0;
    flow_packed(field, epsilon, p.x, p.v, t, dt, species);
    return p;
}

EmpiricalMeasure pushforward(const FieldFn& field, double epsilon, const EmpiricalMeasure& f0, double t, double dt,
                             std::size_t species)
{
    check_flow_args(epsilon, t, dt);
    const std::size_t d = field.dim;
    if (f0.dim() != 2 * d)
        throw Error(ErrorKind::DimensionMismatch,
                    fmt::format("phase-space measure in R^{} for a field on R^{}", f0.dim(), d));
    const std::size_t n = f0.size();
    std::vector<double> x(n * d), v(n * d);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t c = 0; c < d; ++c) {
            x[k * d + c] = f0.points()[k * 2 * d + c];
            v[k * d + c] = f0.points()[k * 2 * d + d + c];
        }
    flow_packed(field, epsilon, x, v, t, dt, species);
    std::vector<double> pts(n * 2 * d);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t c = 0; c < d; ++c) {
            pts[k * 2 * d + c] = x[k * d + c];
            pts[k * 2 * d + d + c] = v[k * d + c];
        }
    return EmpiricalMeasure(2 * d, std::move(pts), f0.weights());
}

MultiSpeciesState state_from_phase_measures(std::span<const EmpiricalMeasure> measures, double time)
{
    std::vector<SpeciesEnsemble> species;
    for (const auto& m : measures) {
        if (m.dim() % 2 != 0)
            throw Error(ErrorKind::DimensionMismatch, "phase-space measure must have even dimension");
        const std::size_t d = m.dim() / 2;
        std::vector<double> x(m.size() * d), v(m.size() * d);
        for (std::size_t k = 0; k < m.size(); ++k)
            for (std::size_t c = 0; c < d; ++c) {
                x[k * d + c] = m.points()[k * 2 * d + c];
                v[k * d + c] = m.points()[k * 2 * d + d + c];
            }
        species.emplace_back(d, std::move(x), m.weights(), std::move(v));
    }
    return MultiSpeciesState(time, std::move(species));
}

double phase_w1(const MultiSpeciesState& f, const MultiSpeciesState& g, const W1Options& options)
{
    if (f.species_count() != g.species_count())
        throw Error(ErrorKind::SpeciesCountMismatch,
                    fmt::format("{} species against {}", f.species_count(), g.species_count()));
    double total = 0.0;
    for (std::size_t i = 0; i < f.species_count(); ++i) {
        const auto& a = f[i];
        const auto& b = g[i];
        if (a.positions() == b.positions() && a.velocities() == b.velocities() && a.weights() == b.weights())
            continue;
        total += w1(EmpiricalMeasure::from_species(a, true), EmpiricalMeasure::from_species(b, true), options);
    }
    return total;
}

double contraction_factor(double upsilon, double epsilon, double window)
{
    const double c2 = 1.0 + (1.0 + upsilon) / epsilon;
    return std::expm1(c2 * window) / (epsilon * c2) * upsilon;
}

namespace {

using Coords = std::vector<std::vector<double>>;

struct Iterate {
    std::vector<Coords> positions;          // every integration step
    std::vector<MultiSpeciesState> samples; // every comparison time
};

class WindowSolver
{
public:
    WindowSolver(const KernelMatrix& kernels, double epsilon, const MultiSpeciesState& start, double length,
                 std::size_t samples, double dt)
        : kernels_(kernels), epsilon_(epsilon), start_(start), samples_(samples)
    {
        const double spacing = length / static_cast<double>(samples);
        per_sample_ = step_count(spacing, dt);
        h_ = spacing / static_cast<double>(per_sample_);
        coeff_ = exp_euler_coefficients(h_, epsilon_);
    }

    std::size_t steps() const { return samples_ * per_sample_; }

    // Sources for step n are given by `sources(n)`.
    template <class Sources>
    Iterate advance(Sources sources) const
    {
        const std::size_t ns = start_.species_count();
        Coords x, v;
        for (const auto& s : start_.species()) {
            x.push_back(s.positions());
            v.push_back(*s.velocities());
        }
        Iterate out;
        out.positions.reserve(steps() + 1);
        out.positions.push_back(x);
        for (std::size_t n = 0; n < steps(); ++n) {
            const Coords& src = sources(n);
            std::vector<SpeciesEnsemble> sp;
            sp.reserve(ns);
            for (std::size_t i = 0; i < ns; ++i)
                sp.push_back(start_[i].with_coordinates(src[i], std::nullopt));
            MultiSpeciesState field_src(start_.time() + h_ * static_cast<double>(n), std::move(sp));
            for (std::size_t i = 0; i < ns; ++i) {
                std::vector<double> e = assemble_field(kernels_, field_src, i, x[i]);
                for (std::size_t k = 0; k < e.size(); ++k) {
                    x[i][k] += coeff_.drift_u * v[i][k] + coeff_.drift_e * e[k];
                    v[i][k] = coeff_.decay * v[i][k] + coeff_.relax * e[k];
                }
            }
            out.positions.push_back(x);
            if ((n + 1) % per_sample_ == 0) {
                std::vector<SpeciesEnsemble> snap;
                for (std::size_t i = 0; i < ns; ++i)
                    snap.push_back(start_[i].with_coordinates(x[i], v[i]));
                out.samples.emplace_back(start_.time() + h_ * static_cast<double>(n + 1), std::move(snap));
            }
        }
        return out;
    }

private:
    const KernelMatrix& kernels_;
    double epsilon_;
    const MultiSpeciesState& start_;
    std::size_t samples_;
    std::size_t per_sample_ = 1;
    double h_ = 0.0;
    ExpEulerCoefficients coeff_;
};

double sup_distance(const Iterate& a, const Iterate& b, const W1Options& options)
{
    std::vector<double> d(a.samples.size(), 0.0);
    parallel_for(
        d.size(),
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t j = begin; j < end; ++j)
                d[j] = phase_w1(a.samples[j], b.samples[j], options);
        },
        1);
    double best = 0.0;
    for (double v : d)
        best = std::max(best, v);
    return best;
}

} // namespace

PicardResult picard_solve(const MultiSpeciesState& f0, const KernelMatrix& kernels, double epsilon,
                          const PicardConfig& cfg)
{
    if (!(cfg.tol > 0.0))
        throw Error(ErrorKind::InvalidState, "Picard tolerance must be positive");
    if (cfg.max_iter < 1)
        throw Error(ErrorKind::InvalidState, "Picard needs at least one iteration");
    if (cfg.samples < 1)
        throw Error(ErrorKind::InvalidState, "Picard needs at least one comparison time");
    check_flow_args(epsilon, cfg.horizon, cfg.dt);
    if (kernels.has_singular())
        throw Error(ErrorKind::SingularEntry, "regularize singular diagonals before the Picard iteration");
    if (!f0.has_velocities())
        throw Error(ErrorKind::MissingVelocities, "Picard iteration needs phase-space initial data");
    if (f0.species_count() != kernels.species())
        throw Error(ErrorKind::SpeciesCountMismatch,
                    fmt::format("state has {} species, kernel matrix {}", f0.species_count(), kernels.species()));

    PicardResult result;
    result.trajectory.push_back(f0);
    if (cfg.horizon == 0.0)
        return result;
    const double window = cfg.window > 0.0 ? std::min(cfg.window, cfg.horizon) : cfg.horizon;
    const auto windows = static_cast<std::size_t>(std::ceil(cfg.horizon / window - 1e-9));
    const double length = cfg.horizon / static_cast<double>(windows);

    MultiSpeciesState start = f0;
    for (std::size_t w = 0; w < windows; ++w) {
        WindowSolver solver(kernels, epsilon, start, length, cfg.samples, cfg.dt);
        Coords initial;
        for (const auto& s : start.species())
            initial.push_back(s.positions());
        Iterate prev = solver.advance([&](std::size_t) -> const Coords& { return initial; });
        PicardWindow info;
        info.t0 = start.time();
        info.t1 = start.time() + length;
        bool converged = false;
        for (std::size_t k = 0; k < cfg.max_iter; ++k) {
            Iterate next = solver.advance([&](std::size_t n) -> const Coords& { return prev.positions[n]; });
            info.distances.push_back(sup_distance(next, prev, cfg.metric));
            prev = std::move(next);
            if (info.distances.back() <= cfg.tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw NoConvergenceError(fmt::format("Picard iteration on [{}, {}] did not reach tol {} in {} iterations",
                                                 info.t0, info.t1, cfg.tol, cfg.max_iter),
                                     info.distances);
        result.windows.push_back(std::move(info));
        for (auto& s : prev.samples)
            result.trajectory.push_back(s);
        start = result.trajectory.back();
    }
    return result;
}

PicardResult picard_solve(std::span<const EmpiricalMeasure> f0, const KernelMatrix& kernels, double epsilon,
                          const PicardConfig& cfg)
{
    return picard_solve(state_from_phase_measures(f0), kernels, epsilon, cfg);
}

StabilitySeries stability_ratio(const MultiSpeciesState& f0, const MultiSpeciesState& g0,
                                const KernelMatrix& kernels, double epsilon, const PicardConfig& cfg)
{
    const double base = phase_w1(f0, g0, cfg.metric);
    if (base < 1e-14)
        throw Error(ErrorKind::DegenerateInitialDistance,
                    fmt::format("initial distance {:.3g} is below 1e-14", base));
    PicardResult f = picard_solve(f0, kernels, epsilon, cfg);
    PicardResult g = picard_solve(g0, kernels, epsilon, cfg);
    StabilitySeries out;
    for (std::size_t j = 0; j < f.trajectory.size(); ++j) {
        out.times.push_back(f.trajectory[j].time());
        out.ratio.push_back(phase_w1(f.trajectory[j], g.trajectory[j], cfg.metric) / base);
    }
    return out;
}

} // namespace kinswarm
