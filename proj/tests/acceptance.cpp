// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "kinswarm/benchmarks.hpp"
#include "kinswarm/diagnostics.hpp"
#include "kinswarm/harness.hpp"
#include "kinswarm/kinetic.hpp"
#include "kinswarm/macro.hpp"
#include "kinswarm/parallel.hpp"
#include "kinswarm/transport.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace kinswarm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

template <class F>
void criterion(int id, const std::string& title, F&& body, double budget_seconds = 0.0)
{
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_seconds > 0.0 && secs > budget_seconds) {
        out.pass = false;
        out.detail += fmt::format("; over the {:.0f} s budget", budget_seconds);
    }
    if (!out.pass)
        ++failures;
    fmt::print("[{}] {:>2} {}: {} ({:.2f} s)\n", out.pass ? "PASS" : "FAIL", id, title, out.detail, secs);
    std::fflush(stdout);
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double perm_cost(const EmpiricalMeasure& a, const EmpiricalMeasure& b, const std::vector<std::size_t>& perm)
{
    double cost = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        double r2 = 0.0;
        for (std::size_t c = 0; c < a.dim(); ++c) {
            const double d = a.point(i)[c] - b.point(perm[i])[c];
            r2 += d * d;
        }
        cost += std::sqrt(r2);
    }
    return cost / static_cast<double>(perm.size());
}

double brute_force(const EmpiricalMeasure& a, const EmpiricalMeasure& b)
{
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do
        best = std::min(best, perm_cost(a, b, perm));
    while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

ExperimentConfig resized(const ExperimentConfig& base, std::size_t count)
{
    nlohmann::json doc = base.document;
    for (auto& s : doc["species"])
        s["count"] = count;
    return parse_experiment(doc);
}

// Files below `dir` with a .csv extension, relative path -> bytes.
std::vector<std::pair<std::string, std::string>> csv_files(const fs::path& dir)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv")
            out.emplace_back(fs::relative(e.path(), dir).string(), slurp(e.path()));
    std::sort(out.begin(), out.end());
    return out;
}

const fs::path kOut = "acceptance_out";

// ---------------------------------------------------------------------------

Outcome damped_characteristics()
{
    double worst = 0.0;
    const double x0 = 0.3, v0 = -0.7;
    for (double eps : {1e-3, 1.0, 1e3})
        for (double t : {0.1, 1.0}) {
            const double x = x0 + eps * v0 * -std::expm1(-t / eps), v = v0 * std::exp(-t / eps);
            auto p = flow_map(FieldFn::zero(1), eps, {{x0}, {v0}}, t, 1e-3);
            worst = std::max({worst, std::abs(p.x[0] - x), std::abs(p.v[0] - v)});
            // Particle integrator with zero kernels, a few step sizes.
            for (double dt : {1e-2, 3e-2}) {
                MultiSpeciesState s(0.0, {SpeciesEnsemble::with_equal_weights(1, {x0}, std::vector<double>{v0})});
                const auto n = static_cast<std::size_t>(std::ceil(t / dt - 1e-9));
                const IntegratorConfig cfg{Scheme::ExpEuler, t / static_cast<double>(n), eps};
                for (std::size_t k = 0; k < n; ++k)
                    s = step_second_order(s, KernelMatrix::zero(1, 1), cfg);
                worst = std::max({worst, std::abs(s[0].positions()[0] - x), std::abs((*s[0].velocities())[0] - v)});
            }
        }
    return {worst <= 1e-12, fmt::format("max error {:.2e} (limit 1e-12)", worst)};
}

Outcome w1_oracles()
{
    std::mt19937_64 rng(20240603);
    std::uniform_int_distribution<std::size_t> npts(1, 8), dims(1, 3);
    std::uniform_real_distribution<double> u(-2.0, 2.0), w(0.05, 1.0);
    double worst_exact = 0.0, worst_1d = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = npts(rng), d = dims(rng);
        std::vector<double> a(n * d), b(n * d);
        for (double& x : a)
            x = u(rng);
        for (double& x : b)
            x = u(rng);
        auto ma = EmpiricalMeasure::uniform(d, a), mb = EmpiricalMeasure::uniform(d, b);
        worst_exact = std::max(worst_exact, std::abs(w1_exact(ma, mb) - brute_force(ma, mb)));
    }
    for (int trial = 0; trial < 200; ++trial) {
        auto draw = [&](std::size_t n) {
            std::vector<double> x(n), wt(n);
            double total = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                x[k] = u(rng);
                total += (wt[k] = w(rng));
            }
            for (double& v : wt)
                v /= total;
            return EmpiricalMeasure(1, x, wt);
        };
        auto ma = draw(npts(rng)), mb = draw(npts(rng));
        worst_1d = std::max(worst_1d, std::abs(w1_1d(ma, mb) - w1_exact(ma, mb)));
    }
    return {worst_exact <= 1e-10 && worst_1d <= 1e-10,
            fmt::format("exact vs brute force {:.2e}, 1d vs exact {:.2e} (limit 1e-10)", worst_exact, worst_1d)};
}

Outcome picard_contraction()
{
    const ExperimentConfig cfg = resized(gaussian_benchmark().base, 128);
    const double eps = 0.5, window = 0.25;
    const KernelMatrix kernels = cfg.particle_kernels();
    const MultiSpeciesState f0 = initial_state(cfg);
    const double upsilon = kernel_bounds(kernels, support_radius(f0.positions_only())).upsilon;
    const double bound = contraction_factor(upsilon, eps, window);

    PicardConfig pc;
    pc.tol = 1e-8;
    pc.max_iter = 20;
    pc.dt = 1e-3;
    pc.horizon = window;
    pc.window = window;
    pc.samples = 32;
    auto result = picard_solve(f0, kernels, eps, pc);
    const auto& d = result.windows.at(0).distances;
    double worst = 0.0;
    bool decreasing = true;
    for (std::size_t k = 1; k < d.size(); ++k) {
        decreasing = decreasing && d[k] < d[k - 1];
        worst = std::max(worst, d[k] / d[k - 1]);
    }
    const bool pass = decreasing && d.size() >= 2 && worst <= 1.1 * bound && d.back() <= pc.tol && d.size() <= 20;
    std::string seq;
    for (double v : d)
        seq += fmt::format("{}{:.2e}", seq.empty() ? "" : " ", v);
    return {pass, fmt::format("{} iterations, worst ratio {:.3f} vs C(T)*Upsilon = {:.3f} (Upsilon {:.3f}); "
                              "distances {}",
                              d.size(), worst, bound, upsilon, seq)};
}

Outcome stability()
{
    const ExperimentConfig cfg = resized(gaussian_benchmark().base, 64);
    const KernelMatrix kernels = cfg.particle_kernels();
    const MultiSpeciesState f0 = initial_state(cfg);
    PicardConfig pc;
    pc.tol = 1e-8;
    pc.max_iter = 30;
    pc.dt = 1e-3;
    pc.horizon = 1.0;
    pc.window = 0.25;
    pc.samples = 8;

    std::vector<StabilitySeries> series;
    for (int pair = 0; pair < 10; ++pair) {
        std::mt19937_64 rng(7000 + pair);
        std::uniform_real_distribution<double> noise(-0.05, 0.05);
        std::vector<SpeciesEnsemble> species;
        for (const auto& s : f0.species()) {
            auto x = s.positions();
            auto v = *s.velocities();
            for (double& e : x)
                e += noise(rng);
            for (double& e : v)
                e += noise(rng);
            species.push_back(s.with_coordinates(x, v));
        }
        series.push_back(stability_ratio(f0, MultiSpeciesState(0.0, species), kernels, 0.5, pc));
    }
    double c_hat = 0.0;
    const auto& first = series.front();
    for (std::size_t q = 0; q < first.times.size(); ++q)
        if (first.times[q] > 0.0)
            c_hat = std::max(c_hat, std::log(first.ratio[q]) / first.times[q]);
    double worst = 0.0, peak = 0.0;
    for (const auto& s : series)
        for (std::size_t q = 0; q < s.times.size(); ++q) {
            worst = std::max(worst, s.ratio[q] / std::exp(c_hat * s.times[q]));
            peak = std::max(peak, s.ratio[q]);
        }
    return {worst <= 1.05, fmt::format("fitted C = {:.4f}; worst ratio / envelope {:.4f} (limit 1.05); max ratio {:.4f}",
                                       c_hat, worst, peak)};
}

struct SweepRuns {
    SweepResult one;
    SweepResult eight;
};

SweepRuns gaussian_runs, singular_runs;

Outcome small_inertia(const SweepResult& r)
{
    if (r.partial)
        return {false, "sweep point failed"};
    const auto& m = r.final_metric;
    const double ratio = m.back() / m.front();
    std::string vals;
    for (double v : m)
        vals += fmt::format("{}{:.3e}", vals.empty() ? "" : " ", v);
    return {r.monotone && ratio <= 0.5,
            fmt::format("W1(T) = [{}], strictly decreasing: {}, last/first {:.3f} (limit 0.5), slope {:.2f}", vals,
                        r.monotone ? "yes" : "no", ratio, r.slope)};
}

Outcome alignment_decay(const SweepResult& r, std::size_t species)
{
    if (r.partial)
        return {false, "sweep point failed"};
    double lo = INFINITY, hi = -INFINITY;
    std::string vals;
    for (std::size_t p = 1; p < r.points.size(); ++p)
        for (std::size_t i = 0; i < species; ++i) {
            const std::string name = fmt::format("I_{}", i + 1);
            const double ratio = r.points[p].series.channel(name).back() / r.points[p - 1].series.channel(name).back();
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            vals += fmt::format("{}{:.3f}", vals.empty() ? "" : " ", ratio);
        }
    return {lo >= 0.3 && hi <= 0.7, fmt::format("I(1; eps/2)/I(1; eps) = [{}] (range [0.3, 0.7])", vals)};
}

Outcome modulated_energy_decay(const SweepResult& r)
{
    if (r.partial)
        return {false, "sweep point failed"};
    std::vector<double> finals;
    double min_interaction = INFINITY;
    for (const auto& p : r.points) {
        finals.push_back(p.series.channel("ek_total").back());
        for (double v : p.series.channel("ek_interaction"))
            min_interaction = std::min(min_interaction, v);
    }
    bool decreasing = true;
    for (std::size_t k = 1; k < finals.size(); ++k)
        decreasing = decreasing && finals[k] < finals[k - 1];
    std::string vals;
    for (double v : finals)
        vals += fmt::format("{}{:.3e}", vals.empty() ? "" : " ", v);
    return {decreasing && min_interaction >= -1e-10,
            fmt::format("E_K(T) = [{}], decreasing: {}; min interaction part {:.3e} (limit -1e-10)", vals,
                        decreasing ? "yes" : "no", min_interaction)};
}

Outcome second_moment_envelope(const SweepResult& r)
{
    if (r.partial)
        return {false, "sweep point failed"};
    // Fitted on the coarsest epsilon, then asserted for every run.
    double c_hat = 0.0;
    const auto& base = r.points.front().series;
    const auto& m0 = base.channel("second_moment_1");
    for (std::size_t q = 1; q < base.rows(); ++q) {
        const double t = base.times()[q];
        c_hat = std::max(c_hat, (m0[q] * std::exp(-t) - m0[0]) / t);
    }
    double worst = 0.0;
    for (const auto& p : r.points) {
        const auto& m = p.series.channel("second_moment_1");
        for (std::size_t q = 0; q < p.series.rows(); ++q) {
            const double t = p.series.times()[q];
            worst = std::max(worst, m[q] / ((m[0] + c_hat * t) * std::exp(t)));
        }
    }
    return {worst <= 1.0, fmt::format("fitted C = {:.3e}; worst value / envelope {:.4f} (limit 1)", c_hat, worst)};
}

Outcome free_energy_dissipation()
{
    const ExperimentConfig cfg = gaussian_benchmark().base;
    const KernelMatrix kernels = cfg.kernel_matrix();
    if (!kernels.is_symmetric())
        return {false, "benchmark kernel matrix is not symmetric"};
    const MultiSpeciesState pos = sample_positions(resized(cfg, 256));
    const double dt = 1e-2, horizon = 2.0;
    auto traj = macro_particle_solve(pos, kernels, horizon, dt, Scheme::Rk4, 5);
    const double slack = 1e-8 + 10.0 * dt * dt;
    double worst = -INFINITY;
    double prev = free_energy(traj.front(), kernels);
    const double first = prev;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        const double f = free_energy(traj[k], kernels);
        worst = std::max(worst, f - prev);
        prev = f;
    }
    return {worst <= slack, fmt::format("{} samples, F {:.6e} -> {:.6e}, largest increase {:.2e} (slack {:.2e})",
                                        traj.size(), first, prev, worst, slack)};
}

Outcome determinism(const std::string& name)
{
    const auto a = csv_files(kOut / (name + "_w1")), b = csv_files(kOut / (name + "_w8"));
    if (a.empty())
        return {false, "no CSV output"};
    std::size_t bytes = 0, differing = 0;
    for (const auto& [path, content] : a)
        bytes += content.size();
    if (a.size() != b.size())
        return {false, fmt::format("{} vs {} CSV files", a.size(), b.size())};
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k] != b[k])
            ++differing;
    return {differing == 0,
            fmt::format("{}: {} CSV files ({} bytes) compared, {} differ", name, a.size(), bytes, differing)};
}

} // namespace

int main()
{
    fs::create_directories(kOut);
    fmt::print("kinswarm {} acceptance suite\n", version());

    criterion(1, "damped characteristics", damped_characteristics, 1.0);
    criterion(2, "W1 oracle equivalence", w1_oracles, 10.0);
    criterion(3, "Picard contraction", picard_contraction, 60.0);
    criterion(4, "stability envelope", stability, 120.0);

    const SweepConfig gaussian = gaussian_benchmark();
    const SweepConfig singular = singular_benchmark();
    double gaussian_secs = 0.0;
    {
        const auto start = std::chrono::steady_clock::now();
        set_worker_count(1);
        gaussian_runs.one = sweep(gaussian, (kOut / "gaussian_w1").string());
        set_worker_count(0);
        gaussian_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    criterion(5, "small-inertia limit, smooth kernels", [&] {
        Outcome o = small_inertia(gaussian_runs.one);
        o.detail += fmt::format("; sweep {:.1f} s", gaussian_secs);
        if (gaussian_secs > 300.0) {
            o.pass = false;
            o.detail += " over the 300 s budget";
        }
        return o;
    });
    criterion(6, "alignment functional decay", [&] {
        return alignment_decay(gaussian_runs.one, gaussian.base.species_count());
    });

    double singular_secs = 0.0;
    {
        const auto start = std::chrono::steady_clock::now();
        set_worker_count(1);
        singular_runs.one = sweep(singular, (kOut / "singular_w1").string());
        set_worker_count(0);
        singular_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    criterion(7, "modulated energy, singular kernel", [&] {
        Outcome o = modulated_energy_decay(singular_runs.one);
        o.detail += fmt::format("; sweep {:.1f} s", singular_secs);
        if (singular_secs > 600.0) {
            o.pass = false;
            o.detail += " over the 600 s budget";
        }
        return o;
    });
    criterion(8, "second-moment envelope", [&] { return second_moment_envelope(singular_runs.one); });
    criterion(9, "free-energy dissipation", free_energy_dissipation, 30.0);

    criterion(10, "determinism across worker counts", [&] {
        set_worker_count(8);
        gaussian_runs.eight = sweep(gaussian, (kOut / "gaussian_w8").string());
        singular_runs.eight = sweep(singular, (kOut / "singular_w8").string());
        set_worker_count(0);
        Outcome g = determinism("gaussian"), s = determinism("singular");
        return Outcome{g.pass && s.pass, g.detail + "; " + s.detail};
    });

    fmt::print("{} of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
