#include "kinswarm/error.hpp"
#include "kinswarm/transport.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace kinswarm;

namespace {

EmpiricalMeasure random_measure(std::mt19937_64& rng, std::size_t n, std::size_t dim, bool equal = true)
{
    std::uniform_real_distribution<double> u(-2.0, 2.0), w(0.1, 1.0);
    std::vector<double> pts(n * dim), weights(n);
    for (double& x : pts)
        x = u(rng);
    double total = 0.0;
    for (double& x : weights)
        total += (x = equal ? 1.0 : w(rng));
    for (double& x : weights)
        x /= total;
    return EmpiricalMeasure(dim, pts, weights);
}

double dist(const EmpiricalMeasure& a, std::size_t i, const EmpiricalMeasure& b, std::size_t j)
{
    double r2 = 0.0;
    for (std::size_t c = 0; c < a.dim(); ++c) {
        const double d = a.point(i)[c] - b.point(j)[c];
        r2 += d * d;
    }
    return std::sqrt(r2);
}

// Minimum over all assignments for equal-weight, equal-size measures.
double brute_force(const EmpiricalMeasure& a, const EmpiricalMeasure& b)
{
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i)
            cost += dist(a, i, b, perm[i]);
        best = std::min(best, cost / static_cast<double>(a.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

TEST(Measure, RejectsUnnormalizedWeights)
{
    try {
        EmpiricalMeasure(1, {0.0, 1.0}, {0.5, 0.6});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidMeasure);
    }
    EXPECT_ANY_THROW(EmpiricalMeasure(1, {0.0, 1.0}, {1.0, 0.0}));
    EXPECT_ANY_THROW(EmpiricalMeasure(2, {0.0, 1.0, 2.0}, {1.0}));
}

TEST(W1OneD, Examples)
{
    EXPECT_DOUBLE_EQ(w1_1d(EmpiricalMeasure::dirac({0.0}), EmpiricalMeasure::dirac({1.0})), 1.0);
    auto mu = EmpiricalMeasure::uniform(1, {0.3, -1.0, 2.0});
    EXPECT_EQ(w1_1d(mu, mu), 0.0);
    EXPECT_DOUBLE_EQ(w1_1d(EmpiricalMeasure::uniform(1, {0.0, 2.0}), EmpiricalMeasure::uniform(1, {1.0, 3.0})), 1.0);
    try {
        w1_1d(EmpiricalMeasure::dirac({0.0, 0.0}), EmpiricalMeasure::dirac({1.0, 0.0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
    }
}

TEST(W1Exact, Examples)
{
    EXPECT_DOUBLE_EQ(w1_exact(EmpiricalMeasure::dirac({0.0, 0.0}), EmpiricalMeasure::dirac({3.0, 4.0})), 5.0);
    std::mt19937_64 rng(1);
    auto mu = random_measure(rng, 7, 3, false);
    EXPECT_NEAR(w1_exact(mu, mu), 0.0, 1e-15);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_measure(rng, 3, 2), b = random_measure(rng, 3, 2);
        EXPECT_NEAR(w1_exact(a, b), brute_force(a, b), 1e-10);
    }
}

TEST(W1Exact, SizeCap)
{
    std::mt19937_64 rng(2);
    auto a = random_measure(rng, 40, 2), b = random_measure(rng, 40, 2);
    try {
        w1_exact(a, b, 50);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SizeCap);
    }
}

TEST(W1Exact, MetricAxioms)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> size(1, 10);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = random_measure(rng, size(rng), 2, false);
        auto b = random_measure(rng, size(rng), 2, false);
        auto c = random_measure(rng, size(rng), 2, false);
        const double ab = w1_exact(a, b), ba = w1_exact(b, a), bc = w1_exact(b, c), ac = w1_exact(a, c);
        EXPECT_NEAR(ab, ba, 1e-12);
        EXPECT_GE(ab + bc - ac, -1e-10);
        EXPECT_GT(ab, 0.0);
    }
}

TEST(W1Exact, MatchesOneDimensional)
{
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> size(1, 12);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_measure(rng, size(rng), 1, false), b = random_measure(rng, size(rng), 1, false);
        EXPECT_NEAR(w1_exact(a, b), w1_1d(a, b), 1e-10);
    }
}

TEST(W1, TranslationInvariance)
{
    std::mt19937_64 rng(5);
    auto a = random_measure(rng, 9, 1, false);
    std::vector<double> shifted = a.points();
    for (double& x : shifted)
        x += 0.7;
    EmpiricalMeasure b(1, shifted, a.weights());
    EXPECT_NEAR(w1_1d(a, b), 0.7, 1e-12);
    EXPECT_NEAR(w1_exact(a, b), 0.7, 1e-12);
    EXPECT_NEAR(w1_sliced(a, b, 5, 3), 0.7, 1e-12);

    auto c = random_measure(rng, 6, 2, false);
    std::vector<double> moved = c.points();
    for (std::size_t k = 0; k < c.size(); ++k) {
        moved[2 * k] += 0.3;
        moved[2 * k + 1] -= 0.4;
    }
    EXPECT_NEAR(w1_exact(c, EmpiricalMeasure(2, moved, c.weights())), 0.5, 1e-12);
}

TEST(W1Sliced, Examples)
{
    std::mt19937_64 rng(6);
    auto a = random_measure(rng, 8, 1, false), b = random_measure(rng, 5, 1, false);
    EXPECT_EQ(w1_sliced(a, b, 17, 99), w1_1d(a, b));
    auto c = random_measure(rng, 8, 3);
    EXPECT_EQ(w1_sliced(c, c, 10, 1), 0.0);

    const double v = w1_sliced(EmpiricalMeasure::dirac({0.0, 0.0}), EmpiricalMeasure::dirac({3.0, 4.0}), 200000, 7);
    EXPECT_NEAR(v, 2.0 / std::numbers::pi * 5.0, 0.003 * 5.0 * 2.0 / std::numbers::pi);
    EXPECT_EQ(v, w1_sliced(EmpiricalMeasure::dirac({0.0, 0.0}), EmpiricalMeasure::dirac({3.0, 4.0}), 200000, 7));
}

TEST(W1Multispecies, Examples)
{
    std::vector<EmpiricalMeasure> f{EmpiricalMeasure::dirac({0.0}), EmpiricalMeasure::dirac({0.0})};
    std::vector<EmpiricalMeasure> g{EmpiricalMeasure::dirac({1.0}), EmpiricalMeasure::dirac({0.5})};
    EXPECT_DOUBLE_EQ(w1_multispecies(f, g, {W1Method::OneD}), 1.5);
    EXPECT_EQ(w1_multispecies(f, f), 0.0);
    std::vector<EmpiricalMeasure> one{EmpiricalMeasure::dirac({0.0})};
    try {
        w1_multispecies(f, one);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SpeciesCountMismatch);
    }
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<EmpiricalMeasure> a{random_measure(rng, 3, 2), random_measure(rng, 3, 2)};
        std::vector<EmpiricalMeasure> b{random_measure(rng, 3, 2), random_measure(rng, 3, 2)};
        EXPECT_NEAR(w1_multispecies(a, b), brute_force(a[0], b[0]) + brute_force(a[1], b[1]), 1e-10);
    }
}

TEST(Moment, Examples)
{
    EXPECT_DOUBLE_EQ(moment(EmpiricalMeasure::uniform(1, {0.0, 2.0}), 1), 1.0);
    EXPECT_DOUBLE_EQ(moment(EmpiricalMeasure::dirac({3.0, 4.0}), 2), 25.0);
    std::mt19937_64 rng(9);
    auto mu = random_measure(rng, 5, 2, false);
    long double direct = 0.0L;
    for (std::size_t k = 0; k < mu.size(); ++k)
        direct += static_cast<long double>(mu.weight(k)) *
                  std::sqrt(static_cast<long double>(mu.point(k)[0]) * mu.point(k)[0] +
                            static_cast<long double>(mu.point(k)[1]) * mu.point(k)[1]);
    EXPECT_NEAR(moment(mu, 1), static_cast<double>(direct), 1e-15);
}

TEST(Mollifier, BumpConstants)
{
    EXPECT_NEAR(Mollifier::bump_integral(1), kBumpIntegral1D, 1e-15);
    EXPECT_NEAR(Mollifier::bump_integral(2), 0.466512393178330068879556171897, 1e-12);
    // Unit mass of gamma_n by a fine midpoint rule in d = 1.
    Mollifier m{3, 1};
    double mass = 0.0;
    const std::size_t n = 200000;
    const double h = 2.0 * m.radius() / n;
    for (std::size_t k = 0; k < n; ++k) {
        const double x[] = {-m.radius() + (k + 0.5) * h};
        mass += m(x) * h;
    }
    EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(MollifyToGrid, MassAndSupport)
{
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        auto mu = random_measure(rng, 25, 1, false);
        auto grid = UniformGrid::line(-3.0, 0.01, 600);
        auto rho = mollify_to_grid(mu, Mollifier{4, 1}, grid);
        double mass = 0.0;
        for (double v : rho) {
            EXPECT_GE(v, 0.0);
            mass += v * grid.cell_volume();
        }
        EXPECT_NEAR(mass, 1.0, 1e-9);
    }
    auto grid = UniformGrid::line(-1.0, 0.05, 40);
    auto rho = mollify_to_grid(EmpiricalMeasure::dirac({0.0}), Mollifier{4, 1}, grid);
    for (std::size_t c = 0; c < grid.total_cells(); ++c) {
        if (std::abs(grid.center(0, c)) > 0.25 + grid.dx) {
            EXPECT_EQ(rho[c], 0.0);
        }
    }
}

TEST(MollifyToGrid, PeakCellMatchesNormalizedBump)
{
    // Cell [-h/2, h/2] around a unit Dirac with n = 1: average of
    // exp(-1/(1-x^2)) / c over the cell, c the bump integral.
    const double h = 1e-3;
    auto grid = UniformGrid::line(-1.5 - h / 2, h, 3001);
    auto rho = mollify_to_grid(EmpiricalMeasure::dirac({0.0}), Mollifier{1, 1}, grid);
    const std::size_t mid = 1500;
    ASSERT_NEAR(grid.center(0, mid), 0.0, 1e-12);
    double avg = 0.0;
    const int q = 2000;
    for (int k = 0; k < q; ++k) {
        const double x = -h / 2 + (k + 0.5) * h / q;
        avg += std::exp(-1.0 / (1.0 - x * x)) / q;
    }
    EXPECT_NEAR(rho[mid], avg / kBumpIntegral1D, 1e-9);
}

TEST(MollifyToGrid, TwoDimensionalMass)
{
    std::mt19937_64 rng(11);
    auto mu = random_measure(rng, 6, 2, false);
    UniformGrid grid{2, {-3.0, -3.0}, 0.05, {120, 120}};
    auto rho = mollify_to_grid(mu, Mollifier{2, 2}, grid);
    double mass = 0.0;
    for (double v : rho)
        mass += v * grid.cell_volume();
    EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(MollifyToGrid, GridTooSmall)
{
    try {
        mollify_to_grid(EmpiricalMeasure::dirac({0.9}), Mollifier{4, 1}, UniformGrid::line(-1.0, 0.1, 20));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::GridTooSmall);
    }
}
