#include "kinswarm/diagnostics.hpp"
#include "kinswarm/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace kinswarm;

namespace {

MultiSpeciesState with_velocities(std::vector<double> x, std::vector<double> v)
{
    return MultiSpeciesState(0.0, {SpeciesEnsemble::with_equal_weights(1, std::move(x), std::move(v))});
}

MultiSpeciesState positions(std::vector<double> x)
{
    return MultiSpeciesState(0.0, {SpeciesEnsemble::with_equal_weights(1, std::move(x))});
}

template <class F>
ErrorKind kind_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::IoFailure;
}

std::vector<double> random_points(std::mt19937_64& rng, std::size_t n)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(n);
    for (double& v : x)
        v = u(rng);
    return x;
}

// Autocorrelation of the normalized bump of radius r at lag s (Simpson rule).
double bump_autocorrelation(double s, double r)
{
    s = std::abs(s);
    if (s >= 2.0 * r)
        return 0.0;
    auto g = [r](double x) {
        const double y = x / r;
        return std::abs(y) < 1.0 ? std::exp(-1.0 / (1.0 - y * y)) / (kBumpIntegral1D * r) : 0.0;
    };
    const double a = -r, b = r - s;
    const int n = 4000;
    const double h = (b - a) / n;
    double total = g(a) * g(a + s) + g(b) * g(b + s);
    for (int k = 1; k < n; ++k)
        total += (k % 2 ? 4.0 : 2.0) * g(a + k * h) * g(a + k * h + s);
    return total * h / 3.0;
}

} // namespace

TEST(Series, SharedTimeAxis)
{
    DiagnosticsSeries s;
    s.declare("a", "1");
    s.declare("b", "length");
    s.append(0.0, {{"a", 1.0}, {"b", 2.0}});
    s.append(0.5, {{"a", 3.0}, {"b", 0.1}});
    EXPECT_EQ(s.rows(), 2u);
    EXPECT_EQ(s.channel("b")[1], 0.1);
    EXPECT_EQ(s.unit("b"), "length");
    EXPECT_EQ(s.to_csv(), "t,a,b\n0,1,2\n0.5,3,0.10000000000000001\n");
    EXPECT_EQ(kind_of([&] { s.append(0.5, {{"a", 0.0}, {"b", 0.0}}); }), ErrorKind::InvalidState);
    EXPECT_EQ(kind_of([&] { s.append(1.0, {{"a", 0.0}}); }), ErrorKind::InvalidState);
    EXPECT_EQ(kind_of([&] { s.declare("c", ""); }), ErrorKind::InvalidState);
}

TEST(Alignment, Examples)
{
    EXPECT_EQ(velocity_alignment(with_velocities({0.3}, {1.0}), KernelMatrix::zero(1, 1))[0], 1.0);
    // grad K * rho = +1 at the particle, so the field E is -1.
    EXPECT_EQ(velocity_alignment(with_velocities({0.0}, {3.0}), {{-1.0}})[0], 4.0);
    EXPECT_EQ(kind_of([] { velocity_alignment(positions({0.0}), KernelMatrix::zero(1, 1)); }),
              ErrorKind::MissingVelocities);
}

TEST(Alignment, SlavedVelocitiesGiveZero)
{
    std::mt19937_64 rng(1);
    const auto k = KernelMatrix::uniform(1, 2, GaussianKernel{1.0, 0.5, 0.3, 0.2});
    MultiSpeciesState s(0.0, {SpeciesEnsemble::with_equal_weights(1, random_points(rng, 6)),
                              SpeciesEnsemble::with_equal_weights(1, random_points(rng, 4))});
    auto e = particle_fields(k, s);
    MultiSpeciesState slaved(0.0, {s[0].with_coordinates(s[0].positions(), e[0]),
                                   s[1].with_coordinates(s[1].positions(), e[1])});
    for (double v : velocity_alignment(slaved, k))
        EXPECT_EQ(v, 0.0);
}

TEST(FreeEnergy, Examples)
{
    EXPECT_DOUBLE_EQ(free_energy(positions({0.0, 1.0}), KernelMatrix::uniform(1, 1, QuadraticKernel{1.0})), 0.25);
    EXPECT_EQ(free_energy(positions({0.0, 1.0}), KernelMatrix::zero(1, 1)), 0.0);
}

TEST(FreeEnergy, MatchesExtendedPrecisionSum)
{
    std::mt19937_64 rng(2);
    const GaussianKernel g{1.0, 0.5, 0.4, 0.2};
    const auto k = KernelMatrix::uniform(1, 1, g);
    for (int trial = 0; trial < 10; ++trial) {
        auto x = random_points(rng, 3);
        long double direct = 0.0L;
        for (double a : x)
            for (double b : x) {
                const long double r2 = static_cast<long double>(a - b) * (a - b);
                direct += (-1.0L * std::exp(-r2 / 0.5L) + 0.4L * std::exp(-r2 / 0.2L)) / 9.0L;
            }
        EXPECT_NEAR(free_energy(positions(x), k), static_cast<double>(direct), 1e-14);
    }
}

TEST(FreeEnergy, SingularSelfPairs)
{
    const auto k = KernelMatrix::uniform(1, 1, RieszKernel{1.0, 0.5});
    EXPECT_NEAR(free_energy(positions({0.0, 4.0}), k), 0.25, 1e-15);
    EXPECT_EQ(kind_of([&] { free_energy(positions({0.0, 4.0}), k, {false}); }), ErrorKind::SingularEvaluation);
}

TEST(InteractionEnergy, Examples)
{
    EXPECT_DOUBLE_EQ(interaction_energy(positions({0.0, 1.0}), 0, RegularizedRieszKernel{1.0, 1.0, 1.0}), 0.75);
    EXPECT_EQ(interaction_energy(positions({0.0, 1.0}), 0, ZeroKernel{}), 0.0);
    std::mt19937_64 rng(3);
    auto x = random_points(rng, 4);
    long double direct = 0.0L;
    for (double a : x)
        for (double b : x)
            direct += 1.0L / (std::sqrt(std::abs(static_cast<long double>(a) - b)) + 0.5L) / 16.0L;
    EXPECT_NEAR(interaction_energy(positions(x), 0, RegularizedRieszKernel{1.0, 0.5, 0.5}),
                static_cast<double>(direct), 1e-14);
}

TEST(SecondMoment, Examples)
{
    EXPECT_EQ(second_moment_energy(with_velocities({1.0}, {2.0}))[0], 2.5);
    EXPECT_EQ(second_moment_energy(with_velocities({0.0, 0.0}, {0.0, 0.0}))[0], 0.0);
    std::mt19937_64 rng(4);
    auto x = random_points(rng, 10), v = random_points(rng, 10);
    long double direct = 0.0L;
    for (std::size_t k = 0; k < 10; ++k)
        direct += (static_cast<long double>(x[k]) * x[k] + static_cast<long double>(v[k]) * v[k]) / 20.0L;
    EXPECT_NEAR(second_moment_energy(with_velocities(x, v))[0], static_cast<double>(direct), 1e-15);
    EXPECT_EQ(kind_of([] { second_moment_energy(positions({0.0})); }), ErrorKind::MissingVelocities);
}

TEST(LpNorm, Examples)
{
    std::vector<double> ones(10, 1.0);
    EXPECT_NEAR(lp_norm(ones, 0.1, 1.0), 1.0, 1e-15);
    EXPECT_EQ(lp_norm(ones, 0.1, INFINITY), 1.0);
    std::vector<double> scaled(10, 3.0);
    for (double p : {1.0, 2.0, 3.5})
        EXPECT_NEAR(lp_norm(scaled, 0.1, p), 3.0 * lp_norm(ones, 0.1, p), 1e-14);

    DensityGrid1D g{0.0, -10.0, 0.01, 2000, {std::vector<double>(2000)}};
    for (std::size_t c = 0; c < g.cells; ++c)
        g.values[0][c] = std::exp(-0.5 * g.center(c) * g.center(c)) / std::sqrt(2.0 * std::numbers::pi);
    EXPECT_NEAR(lp_norm(g, 0, 2.0), std::pow(4.0 * std::numbers::pi, -0.25), 1e-4);
}

TEST(GridInteraction, ExactForConstantKernel)
{
    const GridInteraction form(QuadraticKernel{0.0}, 0.1, 5);
    std::vector<double> a{0.0, 1.0, 2.0, 0.0, 1.0};
    EXPECT_NEAR(form.form(a, a), 0.0, 1e-15);
    // K = C_r with l_r huge is nearly constant; the form tends to C (sum a dx)^2.
    const GridInteraction flat(GaussianKernel{0.0, 1.0, 2.0, 1e12}, 0.1, 5);
    EXPECT_NEAR(flat.form(a, a), 2.0 * 0.16, 1e-9);
}

TEST(GridInteraction, PositiveForRiesz)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const GridInteraction form(RieszKernel{1.0, 0.5}, 0.02, 100);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(100);
        for (double& x : a)
            x = u(rng);
        EXPECT_GE(form.form(a, a), -1e-10);
    }
}

TEST(ModulatedEnergy, MatchedStateIsZero)
{
    const auto k = KernelMatrix::uniform(1, 1, GaussianKernel{1.0, 1.0, 0.0, 1.0});
    std::vector<double> x{-0.4, -0.1, 0.2, 0.5};
    const double x_min = -2.0, dx = 0.01;
    const std::size_t cells = 400;
    auto rho = DensityGrid1D::from_particles(positions(x), x_min, dx, cells, grid_mollifier_index(dx));
    VelocityFieldSample u = velocity_on_grid(rho, k);
    for (double& v : u.values[0])
        v = -v;
    std::vector<double> v(x.size());
    for (std::size_t q = 0; q < x.size(); ++q)
        v[q] = u.interpolate(0, x[q]);
    auto e = modulated_energy(with_velocities(x, v), rho, u, 0.1, k);
    EXPECT_EQ(e.kinetic_part, 0.0);
    EXPECT_EQ(e.interaction_part, 0.0);
    EXPECT_EQ(e.total, 0.0);

    for (double& w : v)
        w += 2.0;
    auto shifted = modulated_energy(with_velocities(x, v), rho, u, 0.1, k);
    EXPECT_NEAR(shifted.kinetic_part, 2.0, 1e-14);
    EXPECT_NEAR(shifted.total, 2.0, 1e-14);
}

TEST(ModulatedEnergy, RieszInteractionMatchesQuadratureOracle)
{
    // rho is a bump at -1/2, rho^eps the same bump at +1/2. With
    // G the bump autocorrelation, the double integral of (rho - rho^eps)
    // against |x|^{-1/2} is 2 int K G - 2 int K(s) G(s - 1) ds.
    const int n = 5;
    const double r = 1.0 / n, eps = 0.2;
    const double x_min = -1.0, dx = 0.005;
    const std::size_t cells = 400;
    const auto k = KernelMatrix::uniform(1, 1, RieszKernel{1.0, 0.5});
    auto rho = DensityGrid1D::from_particles(positions({-0.5}), x_min, dx, cells, n);
    VelocityFieldSample u;
    u.x_min = x_min;
    u.dx = dx;
    u.values = {std::vector<double>(cells, 0.0)};
    auto e = modulated_energy(with_velocities({0.5}, {0.0}), rho, u, eps, k, n);

    // Self term with s = t^2 to remove the singularity: int |s|^{-1/2} G = 4 int_0^sqrt(2r) G(t^2) dt.
    const int q = 2000;
    const double tmax = std::sqrt(2.0 * r), ht = tmax / q;
    double self = 0.0;
    for (int j = 0; j < q; ++j) {
        const double t = (j + 0.5) * ht;
        self += 4.0 * bump_autocorrelation(t * t, r) * ht;
    }
    double cross = 0.0;
    const double hs = 4.0 * r / q;
    for (int j = 0; j < q; ++j) {
        const double s = 1.0 - 2.0 * r + (j + 0.5) * hs;
        cross += bump_autocorrelation(s - 1.0, r) / std::sqrt(s) * hs;
    }
    const double oracle = (2.0 * self - 2.0 * cross) / (2.0 * eps);
    EXPECT_NEAR(e.interaction_part, oracle, 0.01 * oracle);
    EXPECT_EQ(e.kinetic_part, 0.0);
}

TEST(ModulatedEnergy, Errors)
{
    const auto k = KernelMatrix::uniform(1, 1, GaussianKernel{1.0, 1.0, 0.0, 1.0});
    auto rho = DensityGrid1D::from_particles(positions({0.0}), -1.0, 0.01, 200, 10);
    VelocityFieldSample u;
    u.x_min = -1.0;
    u.dx = 0.02;
    u.values = {std::vector<double>(200, 0.0)};
    EXPECT_EQ(kind_of([&] { modulated_energy(with_velocities({0.0}, {0.0}), rho, u, 0.1, k); }),
              ErrorKind::GridMismatch);
    EXPECT_EQ(kind_of([&] { modulated_energy(positions({0.0}), rho, u, 0.1, k); }), ErrorKind::MissingVelocities);
}

TEST(GridMollifier, Index)
{
    EXPECT_EQ(grid_mollifier_index(0.01), 50);
    EXPECT_EQ(grid_mollifier_index(1.0), 1);
}
