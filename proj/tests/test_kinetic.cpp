#include "kinswarm/error.hpp"
#include "kinswarm/kinetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace kinswarm;

namespace {

MultiSpeciesState two_particles(double shift = 0.0)
{
    return MultiSpeciesState(
        0.0, {SpeciesEnsemble::with_equal_weights(1, {0.0 + shift, 1.0 + shift}, std::vector<double>{0.0, 0.0})});
}

double dist(const PhasePoint& a, const PhasePoint& b)
{
    double r2 = 0.0;
    for (std::size_t c = 0; c < a.x.size(); ++c)
        r2 += (a.x[c] - b.x[c]) * (a.x[c] - b.x[c]) + (a.v[c] - b.v[c]) * (a.v[c] - b.v[c]);
    return std::sqrt(r2);
}

} // namespace

TEST(FlowMap, ZeroField)
{
    auto p = flow_map(FieldFn::zero(1), 1.0, {{0.0}, {1.0}}, 1.0, 1e-3);
    EXPECT_NEAR(p.x[0], 1.0 - std::exp(-1.0), 1e-12);
    EXPECT_NEAR(p.v[0], std::exp(-1.0), 1e-12);
}

TEST(FlowMap, ConstantField)
{
    auto p = flow_map(FieldFn::constant({2.0}), 1.0, {{0.0}, {0.0}}, std::log(2.0), 1e-2);
    EXPECT_NEAR(p.v[0], 1.0, 1e-12);
    EXPECT_NEAR(p.x[0], 2.0 * std::log(2.0) - 1.0, 1e-12);
}

TEST(FlowMap, IdentityAtTimeZero)
{
    FieldFn f = FieldFn::constant({1.0, -3.0});
    PhasePoint p0{{0.4, -0.2}, {1.5, 2.5}};
    auto p = flow_map(f, 0.3, p0, 0.0, 1e-3);
    EXPECT_EQ(p.x, p0.x);
    EXPECT_EQ(p.v, p0.v);
}

TEST(FlowMap, SemigroupExactForConstantField)
{
    FieldFn f = FieldFn::constant({0.7});
    PhasePoint p0{{0.1}, {-0.4}};
    auto direct = flow_map(f, 0.2, p0, 0.9, 0.3);
    auto composed = flow_map(f, 0.2, flow_map(f, 0.2, p0, 0.6, 0.3), 0.3, 0.3);
    EXPECT_NEAR(dist(direct, composed), 0.0, 1e-13);
}

TEST(FlowMap, SemigroupForFrozenKernelField)
{
    const auto k = KernelMatrix::uniform(1, 1, GaussianKernel{1.0, 1.0, 0.0, 1.0});
    auto sources = MultiSpeciesState(0.0, {SpeciesEnsemble::with_equal_weights(1, {-0.5, 0.3, 0.8})});
    FieldFn f = FieldFn::frozen(k, sources);
    PhasePoint p0{{0.2}, {0.5}};
    for (double dt : {1e-2, 1e-3}) {
        auto direct = flow_map(f, 0.5, p0, 1.0, dt);
        auto composed = flow_map(f, 0.5, flow_map(f, 0.5, p0, 0.5, dt), 0.5, dt);
        EXPECT_LE(dist(direct, composed), 10.0 * dt);
    }
}

TEST(FlowMap, LipschitzInInitialData)
{
    // Separation of two trajectories under a field with gradient Lipschitz
    // constant L grows at most like exp(C (L + 1) t); C fitted on one pair.
    const auto k = KernelMatrix::uniform(1, 1, GaussianKernel{1.0, 1.0, 0.0, 1.0});
    auto sources = MultiSpeciesState(0.0, {SpeciesEnsemble::with_equal_weights(1, {-0.5, 0.3, 0.8})});
    FieldFn f = FieldFn::frozen(k, sources);
    const double lip = kernel_bounds(k, 2.0).upsilon, eps = 0.5, t = 1.0;
    auto growth = [&](const PhasePoint& a, const PhasePoint& b) {
        return dist(flow_map(f, eps, a, t, 1e-3), flow_map(f, eps, b, t, 1e-3)) / dist(a, b);
    };
    const double c = std::max(0.0, std::log(growth({{0.0}, {0.0}}, {{0.1}, {0.1}})) / ((lip + 1.0) * t));
    const double envelope = std::exp((2.0 * c + 2.0 / eps) * (lip + 1.0) * t);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int pair = 0; pair < 100; ++pair) {
        PhasePoint a{{u(rng)}, {u(rng)}}, b{{u(rng)}, {u(rng)}};
        EXPECT_LE(growth(a, b), envelope);
    }
}

TEST(FlowMap, FieldPerturbationBound)
{
    // E and E + eta with constant eta: the velocity gap is eta (1 - e^{-t/eps})
    // and the position gap its integral, both below (e^{Ct} - 1) eta / (C eps).
    const double eps = 0.3, eta = 0.05, c = 1.0 + 1.0 / eps;
    PhasePoint p0{{0.0}, {0.2}};
    for (double t : {0.1, 0.5, 1.0, 2.0}) {
        auto a = flow_map(FieldFn::constant({1.0}), eps, p0, t, 1e-3);
        auto b = flow_map(FieldFn::constant({1.0 + eta}), eps, p0, t, 1e-3);
        const double dv = eta * (1.0 - std::exp(-t / eps));
        const double dx = eta * (t - eps * (1.0 - std::exp(-t / eps)));
        EXPECT_NEAR(b.v[0] - a.v[0], dv, 1e-12);
        EXPECT_NEAR(b.x[0] - a.x[0], dx, 1e-12);
        EXPECT_LE(dist(a, b), (std::exp(c * t) - 1.0) / (c * eps) * eta);
    }
}

TEST(Pushforward, Examples)
{
    EmpiricalMeasure f0(2, {0.0, 1.0, 0.5, -1.0}, {0.25, 0.75});
    auto same = pushforward(FieldFn::constant({3.0}), 0.1, f0, 0.0, 1e-3);
    EXPECT_EQ(same.points(), f0.points());

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.1, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pts(8), weights(4);
        for (double& x : pts)
            x = u(rng);
        double total = 0.0;
        for (double& x : weights)
            total += (x = w(rng));
        for (double& x : weights)
            x /= total;
        EmpiricalMeasure mu(2, pts, weights);
        auto pushed = pushforward(FieldFn::constant({u(rng)}), 0.5, mu, 0.3, 1e-2);
        EXPECT_EQ(pushed.weights(), mu.weights());
        EXPECT_EQ(pushed.size(), mu.size());
    }
}

TEST(Picard, ZeroKernelsConvergeInOneIteration)
{
    PicardConfig cfg;
    cfg.horizon = 0.5;
    cfg.dt = 1e-2;
    cfg.samples = 8;
    auto result = picard_solve(two_particles(), KernelMatrix::zero(1, 1), 0.5, cfg);
    ASSERT_EQ(result.windows.size(), 1u);
    ASSERT_EQ(result.windows[0].distances.size(), 1u);
    EXPECT_EQ(result.windows[0].distances[0], 0.0);
    EXPECT_EQ(result.trajectory.size(), cfg.samples + 1);
}

TEST(Picard, QuadraticBenchmarkContracts)
{
    // Windows short enough that C(T) Upsilon < 1.
    const auto k = KernelMatrix::uniform(1, 1, QuadraticKernel{1.0});
    PicardConfig cfg;
    cfg.horizon = 0.5;
    cfg.window = 0.1;
    cfg.dt = 1e-3;
    cfg.tol = 1e-12;
    auto f0 = MultiSpeciesState(
        0.0, {SpeciesEnsemble::with_equal_weights(1, {0.0, 1.0}, std::vector<double>{0.3, -0.2})});
    auto result = picard_solve(f0, k, 0.5, cfg);
    ASSERT_EQ(result.windows.size(), 5u);
    const double bound = contraction_factor(kernel_bounds(k, 2.0).upsilon, 0.5, cfg.window);
    ASSERT_LT(bound, 1.0);
    for (const auto& w : result.windows) {
        const auto& d = w.distances;
        ASSERT_GE(d.size(), 3u);
        for (std::size_t q = 1; q < d.size(); ++q) {
            if (d[q - 1] < 1e-13)
                break;
            EXPECT_LT(d[q], d[q - 1]);
            EXPECT_LE(d[q] / d[q - 1], 1.1 * bound);
        }
    }
}

TEST(Picard, SelfConsistency)
{
    const auto k = KernelMatrix::uniform(1, 1, GaussianKernel{0.5, 1.0, 0.0, 1.0});
    PicardConfig cfg;
    cfg.horizon = 0.5;
    cfg.dt = 1e-3;
    cfg.tol = 1e-9;
    auto f0 = MultiSpeciesState(
        0.0, {SpeciesEnsemble::with_equal_weights(1, {-0.4, 0.1, 0.7}, std::vector<double>{0.2, 0.0, -0.3})});
    auto result = picard_solve(f0, k, 0.5, cfg);
    // Further iterations move the converged trajectory by at most the tail of
    // a contracting distance sequence, which stays below tol.
    PicardConfig tight = cfg;
    tight.tol = 1e-13;
    auto again = picard_solve(f0, k, 0.5, tight);
    EXPECT_GT(again.windows.back().distances.size(), result.windows.back().distances.size());
    ASSERT_EQ(again.trajectory.size(), result.trajectory.size());
    for (std::size_t s = 0; s < result.trajectory.size(); ++s)
        EXPECT_LE(phase_w1(result.trajectory[s], again.trajectory[s]), cfg.tol);
    EXPECT_LE(result.windows.back().distances.back(), cfg.tol);
}

TEST(Picard, NoConvergenceReportsDistances)
{
    const auto k = KernelMatrix::uniform(1, 1, QuadraticKernel{1.0});
    PicardConfig cfg;
    cfg.horizon = 0.5;
    cfg.dt = 1e-2;
    cfg.tol = 1e-15;
    cfg.max_iter = 2;
    auto f0 = MultiSpeciesState(
        0.0, {SpeciesEnsemble::with_equal_weights(1, {0.0, 1.0}, std::vector<double>{0.3, -0.2})});
    try {
        picard_solve(f0, k, 0.5, cfg);
        FAIL();
    } catch (const NoConvergenceError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoConvergence);
        EXPECT_EQ(e.distances().size(), 2u);
    }
}

TEST(Picard, RejectsSingularKernels)
{
    const auto k = KernelMatrix::uniform(1, 1, RieszKernel{1.0, 0.5});
    try {
        picard_solve(two_particles(), k, 0.5, PicardConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularEntry);
    }
}

TEST(Picard, PreservesMassAndSpecies)
{
    const auto k = KernelMatrix::uniform(1, 2, GaussianKernel{0.2, 1.0, 0.1, 0.5});
    auto f0 = MultiSpeciesState(
        0.0, {SpeciesEnsemble(1, {0.0, 1.0}, {0.3, 0.7}, std::vector<double>{0.0, 0.0}),
              SpeciesEnsemble::with_equal_weights(1, {0.5, -0.5, 0.2}, std::vector<double>{0.1, 0.0, 0.0})});
    PicardConfig cfg;
    cfg.horizon = 0.4;
    cfg.dt = 1e-2;
    cfg.window = 0.2;
    cfg.samples = 4;
    auto result = picard_solve(f0, k, 0.5, cfg);
    EXPECT_EQ(result.windows.size(), 2u);
    for (const auto& s : result.trajectory) {
        ASSERT_EQ(s.species_count(), 2u);
        EXPECT_EQ(s[0].weights(), f0[0].weights());
        EXPECT_EQ(s[1].weights(), f0[1].weights());
    }
    EXPECT_NEAR(result.trajectory.back().time(), 0.4, 1e-12);
}

TEST(ContractionFactor, ClosedForm)
{
    const double eps = 0.5, ups = 0.8, t = 0.25;
    const double c2 = 1.0 + (1.0 + ups) / eps;
    EXPECT_NEAR(contraction_factor(ups, eps, t), (std::exp(c2 * t) - 1.0) / (eps * c2) * ups, 1e-15);
    EXPECT_EQ(contraction_factor(0.0, eps, t), 0.0);
}

TEST(Stability, TranslationWithZeroKernels)
{
    PicardConfig cfg;
    cfg.horizon = 1.0;
    cfg.dt = 1e-2;
    cfg.samples = 10;
    auto s = stability_ratio(two_particles(), two_particles(0.25), KernelMatrix::zero(1, 1), 0.5, cfg);
    ASSERT_EQ(s.ratio.size(), s.times.size());
    for (double r : s.ratio)
        EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(Stability, DegenerateInitialDistance)
{
    try {
        stability_ratio(two_particles(), two_particles(), KernelMatrix::zero(1, 1), 0.5, PicardConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateInitialDistance);
    }
}

TEST(Stability, QuadraticBenchmarkBounded)
{
    const auto k = KernelMatrix::uniform(1, 1, QuadraticKernel{1.0});
    PicardConfig cfg;
    cfg.horizon = 1.0;
    cfg.dt = 1e-3;
    cfg.window = 0.25;
    cfg.samples = 8;
    auto g0 = MultiSpeciesState(
        0.0, {SpeciesEnsemble::with_equal_weights(1, {0.05, 1.1}, std::vector<double>{0.1, 0.0})});
    auto s = stability_ratio(two_particles(), g0, k, 0.5, cfg);
    // Fit C from the largest log-ratio per unit time, then check the envelope.
    double c = 0.0;
    for (std::size_t q = 1; q < s.times.size(); ++q)
        c = std::max(c, std::log(s.ratio[q]) / s.times[q]);
    for (std::size_t q = 0; q < s.times.size(); ++q) {
        EXPECT_TRUE(std::isfinite(s.ratio[q]));
        EXPECT_LE(s.ratio[q], std::exp(c * s.times[q]) * (1.0 + 1e-12));
    }
    EXPECT_LT(c, 10.0);
}
