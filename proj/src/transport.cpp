#include "kinswarm/transport.hpp"

#include "kinswarm/error.hpp"
#include "kinswarm/parallel.hpp"

#include <fmt/format.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_gamma.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>

namespace kinswarm {

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights)
    : dim_(dim), points_(std::move(points)), weights_(std::move(weights))
{
    if (dim_ == 0)
        throw Error(ErrorKind::InvalidMeasure, "dimension must be at least 1");
    if (weights_.empty())
        throw Error(ErrorKind::InvalidMeasure, "measure has no support points");
    if (points_.size() != weights_.size() * dim_)
        throw Error(ErrorKind::InvalidMeasure, "points and weights disagree in length");
    for (double p : points_)
        if (!std::isfinite(p))
            throw Error(ErrorKind::InvalidMeasure, "non-finite support point");
    double sum = 0.0;
    for (double w : weights_) {
        if (!(w > 0.0) || !std::isfinite(w))
            throw Error(ErrorKind::InvalidMeasure, "weights must be positive and finite");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance)
        throw Error(ErrorKind::InvalidMeasure, fmt::format("weights sum to {:.17g}, expected 1", sum));
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::vector<double> point)
{
    std::size_t d = point.size();
    return EmpiricalMeasure(d, std::move(point), {1.0});
}

EmpiricalMeasure EmpiricalMeasure::uniform(std::size_t dim, std::vector<double> points)
{
    std::size_t n = dim ? points.size() / dim : 0;
    return EmpiricalMeasure(dim, std::move(points), std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0));
}

EmpiricalMeasure EmpiricalMeasure::from_species(const SpeciesEnsemble& species, bool phase_space)
{
    if (!phase_space)
        return EmpiricalMeasure(species.dim(), species.positions(), species.weights());
    if (!species.has_velocities())
        throw Error(ErrorKind::MissingVelocities, "phase-space measure needs velocities");
    const std::size_t d = species.dim();
    std::vector<double> pts;
    pts.reserve(2 * d * species.size());
    for (std::size_t k = 0; k < species.size(); ++k) {
        auto x = species.position(k);
        auto v = species.velocity(k);
        pts.insert(pts.end(), x.begin(), x.end());
        pts.insert(pts.end(), v.begin(), v.end());
    }
    return EmpiricalMeasure(2 * d, std::move(pts), species.weights());
}

namespace {

void check_same_dim(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu)
{
    if (mu.dim() != nu.dim())
        throw Error(ErrorKind::DimensionMismatch,
                    fmt::format("measures live in R^{} and R^{}", mu.dim(), nu.dim()));
}

struct Atom {
    double x;
    double w;
};

double w1_sorted(std::vector<Atom>& a, std::vector<Atom>& b)
{
    auto by_x = [](const Atom& p, const Atom& q) { return p.x < q.x; };
    std::stable_sort(a.begin(), a.end(), by_x);
    std::stable_sort(b.begin(), b.end(), by_x);
    // Integrate |F_a - F_b| between consecutive merged breakpoints.
    std::size_t i = 0, j = 0;
    double fa = 0.0, fb = 0.0, total = 0.0;
    double prev = std::min(a.front().x, b.front().x);
    while (i < a.size() || j < b.size()) {
        double next;
        if (j >= b.size() || (i < a.size() && a[i].x <= b[j].x))
            next = a[i].x;
        else
            next = b[j].x;
        total += std::abs(fa - fb) * (next - prev);
        while (i < a.size() && a[i].x == next)
            fa += a[i++].w;
        while (j < b.size() && b[j].x == next)
            fb += b[j++].w;
        prev = next;
    }
    return total;
}

} // namespace

double w1_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu)
{
    if (mu.dim() != 1 || nu.dim() != 1)
        throw Error(ErrorKind::DimensionMismatch, "w1_1d needs one-dimensional measures");
    std::vector<Atom> a(mu.size()), b(nu.size());
    for (std::size_t k = 0; k < mu.size(); ++k)
        a[k] = {mu.points()[k], mu.weight(k)};
    for (std::size_t k = 0; k < nu.size(); ++k)
        b[k] = {nu.points()[k], nu.weight(k)};
    return w1_sorted(a, b);
}

double w1_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t size_cap)
{
    check_same_dim(mu, nu);
    const std::size_t n1 = mu.size(), n2 = nu.size(), m = mu.dim();
    if (n1 + n2 > size_cap)
        throw Error(ErrorKind::SizeCap,
                    fmt::format("combined support {} exceeds the exact-solver cap {}", n1 + n2, size_cap));

    std::vector<double> cost(n1 * n2);
    for (std::size_t i = 0; i < n1; ++i) {
        auto x = mu.point(i);
        for (std::size_t j = 0; j < n2; ++j) {
            auto y = nu.point(j);
            double s = 0.0;
            for (std::size_t c = 0; c < m; ++c)
                s += (x[c] - y[c]) * (x[c] - y[c]);
            cost[i * n2 + j] = std::sqrt(s);
        }
    }

    constexpr double kMassEps = 1e-15;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const std::size_t nv = n1 + n2; // sources 0..n1-1, sinks n1..
    std::vector<double> supply(mu.weights()), demand(nu.weights());
    std::vector<double> flow(n1 * n2, 0.0);
    std::vector<double> pot(nv, 0.0);
    for (std::size_t j = 0; j < n2; ++j) {
        double best = kInf;
        for (std::size_t i = 0; i < n1; ++i)
            best = std::min(best, cost[i * n2 + j]);
        pot[n1 + j] = best;
    }

    std::vector<double> dist(nv);
    std::vector<std::size_t> pred(nv);
    std::vector<char> done(nv);
    const std::size_t none = nv;

    auto remaining = [&](const std::vector<double>& v) {
        return std::any_of(v.begin(), v.end(), [&](double s) { return s > kMassEps; });
    };

    while (remaining(supply) && remaining(demand)) {
        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(pred.begin(), pred.end(), none);
        std::fill(done.begin(), done.end(), 0);
        for (std::size_t i = 0; i < n1; ++i)
            if (supply[i] > kMassEps)
                dist[i] = 0.0;

        std::size_t target = none;
        while (true) {
            std::size_t u = none;
            double du = kInf;
            for (std::size_t v = 0; v < nv; ++v)
                if (!done[v] && dist[v] < du) {
                    du = dist[v];
                    u = v;
                }
            if (u == none)
                break;
            done[u] = 1;
            if (u >= n1) {
                std::size_t j = u - n1;
                if (demand[j] > kMassEps) {
                    target = u;
                    break;
                }
                // Reverse arcs carry flow and have zero reduced cost up to rounding.
                for (std::size_t i = 0; i < n1; ++i) {
                    if (done[i] || flow[i * n2 + j] <= 0.0)
                        continue;
                    double nd = du + std::max(0.0, -cost[i * n2 + j] + pot[u] - pot[i]);
                    if (nd < dist[i]) {
                        dist[i] = nd;
                        pred[i] = u;
                    }
                }
            } else {
                const double* row = cost.data() + u * n2;
                for (std::size_t j = 0; j < n2; ++j) {
                    std::size_t v = n1 + j;
                    if (done[v])
                        continue;
                    double nd = du + std::max(0.0, row[j] + pot[u] - pot[v]);
                    if (nd < dist[v]) {
                        dist[v] = nd;
                        pred[v] = u;
                    }
                }
            }
        }
        if (target == none)
            break; // supplies and demands disagree only by rounding

        const double dstar = dist[target];
        for (std::size_t v = 0; v < nv; ++v)
            pot[v] += std::min(dist[v], dstar);

        // Bottleneck along the path back to its originating source.
        double amount = demand[target - n1];
        std::size_t v = target;
        while (pred[v] != none) {
            std::size_t u = pred[v];
            if (u >= n1) // v is a source reached through reverse arc (u sink -> v source)
                amount = std::min(amount, flow[v * n2 + (u - n1)]);
            v = u;
        }
        amount = std::min(amount, supply[v]);
        const std::size_t origin = v;

        v = target;
        while (pred[v] != none) {
            std::size_t u = pred[v];
            if (u < n1)
                flow[u * n2 + (v - n1)] += amount;
            else {
                double& f = flow[v * n2 + (u - n1)];
                f -= amount;
                if (f < kMassEps)
                    f = 0.0;
            }
            v = u;
        }
        supply[origin] -= amount;
        if (supply[origin] < kMassEps)
            supply[origin] = 0.0;
        demand[target - n1] -= amount;
        if (demand[target - n1] < kMassEps)
            demand[target - n1] = 0.0;
    }

    double total = 0.0;
    for (std::size_t k = 0; k < flow.size(); ++k)
        total += flow[k] * cost[k];
    return total;
}

double w1_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t directions,
                 std::uint64_t seed)
{
    check_same_dim(mu, nu);
    if (directions == 0)
        throw Error(ErrorKind::InvalidState, "sliced W1 needs at least one direction");
    const std::size_t m = mu.dim();
    if (m == 1)
        return w1_1d(mu, nu);
    std::vector<double> per(directions);
    parallel_for(
        directions,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> theta(m);
            std::vector<Atom> a(mu.size()), b(nu.size());
            for (std::size_t l = begin; l < end; ++l) {
                std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                  static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(l >> 32)};
                std::mt19937_64 gen(seq);
                std::normal_distribution<double> normal;
                double norm = 0.0;
                do {
                    norm = 0.0;
                    for (auto& t : theta) {
                        t = normal(gen);
                        norm += t * t;
                    }
                } while (norm == 0.0);
                norm = std::sqrt(norm);
                for (auto& t : theta)
                    t /= norm;
                auto project = [&](const EmpiricalMeasure& src, std::vector<Atom>& out) {
                    for (std::size_t k = 0; k < src.size(); ++k) {
                        auto p = src.point(k);
                        double s = 0.0;
                        for (std::size_t c = 0; c < m; ++c)
                            s += theta[c] * p[c];
                        out[k] = {s, src.weight(k)};
                    }
                };
                project(mu, a);
                project(nu, b);
                per[l] = w1_sorted(a, b);
            }
        },
        1);
    double total = 0.0;
    for (double v : per)
        total += v;
    return total / static_cast<double>(directions);
}

W1Method parse_w1_method(std::string_view name)
{
    if (name == "exact" || name == "w1_exact")
        return W1Method::Exact;
    if (name == "1d" || name == "w1_1d")
        return W1Method::OneD;
    if (name == "sliced" || name == "w1_sliced")
        return W1Method::Sliced;
    throw Error(ErrorKind::ConfigInvalid, fmt::format("unknown W1 method '{}'", name));
}

std::string_view to_string(W1Method method) noexcept
{
    switch (method) {
    case W1Method::Exact: return "exact";
    case W1Method::OneD: return "1d";
    case W1Method::Sliced: return "sliced";
    }
    return "unknown";
}

double w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const W1Options& options)
{
    switch (options.method) {
    case W1Method::Exact:
        if (mu.dim() == 1 && nu.dim() == 1 && mu.size() + nu.size() > options.size_cap)
            return w1_1d(mu, nu);
        return w1_exact(mu, nu, options.size_cap);
    case W1Method::OneD: return w1_1d(mu, nu);
    case W1Method::Sliced: return w1_sliced(mu, nu, options.directions, options.seed);
    }
    return 0.0;
}

double w1_multispecies(std::span<const EmpiricalMeasure> f, std::span<const EmpiricalMeasure> g,
                       const W1Options& options)
{
    if (f.size() != g.size())
        throw Error(ErrorKind::SpeciesCountMismatch,
                    fmt::format("{} species against {}", f.size(), g.size()));
    double total = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        total += w1(f[i], g[i], options);
    return total;
}

double moment(const EmpiricalMeasure& mu, int p)
{
    if (p < 1)
        throw Error(ErrorKind::InvalidState, "moment order must be at least 1");
    double total = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        double r2 = 0.0;
        for (double x : mu.point(k))
            r2 += x * x;
        double r = std::sqrt(r2);
        double v = 1.0;
        if (p == 2)
            v = r2;
        else
            for (int e = 0; e < p; ++e)
                v *= r;
        total += mu.weight(k) * v;
    }
    return total;
}

namespace {

double bump(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

// CDF of the normalized 1-D bump, tabulated with Gauss-Legendre panels and
// interpolated by cubic Hermite using the density as derivative.
class BumpCdf
{
public:
    static constexpr std::size_t kPanels = 4096;

    BumpCdf() : table_(kPanels + 1, 0.0)
    {
        gsl_integration_glfixed_table* gl = gsl_integration_glfixed_table_alloc(16);
        gsl_function f;
        f.function = [](double x, void*) { return bump(x * x); };
        f.params = nullptr;
        const double h = 2.0 / kPanels;
        for (std::size_t k = 0; k < kPanels; ++k) {
            double a = -1.0 + h * static_cast<double>(k);
            table_[k + 1] = table_[k] + gsl_integration_glfixed(&f, a, a + h, gl);
        }
        gsl_integration_glfixed_table_free(gl);
        for (auto& v : table_)
            v /= kBumpIntegral1D;
    }

    double operator()(double x) const
    {
        if (x <= -1.0)
            return 0.0;
        if (x >= 1.0)
            return 1.0;
        const double h = 2.0 / kPanels;
        double s = (x + 1.0) / h;
        std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(s), kPanels - 1);
        double t = s - static_cast<double>(k);
        double x0 = -1.0 + h * static_cast<double>(k);
        double y0 = table_[k], y1 = table_[k + 1];
        double d0 = bump(x0 * x0) / kBumpIntegral1D * h, d1 = bump((x0 + h) * (x0 + h)) / kBumpIntegral1D * h;
        double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * d1;
    }

    double total() const { return table_.back(); }

private:
    std::vector<double> table_;
};

const BumpCdf& bump_cdf()
{
    static const BumpCdf cdf;
    return cdf;
}

void check_grid(const UniformGrid& grid)
{
    if (grid.dim == 0 || grid.lower.size() != grid.dim || grid.cells.size() != grid.dim)
        throw Error(ErrorKind::GridMismatch, "grid description is inconsistent");
    if (!(grid.dx > 0.0) || !std::isfinite(grid.dx))
        throw Error(ErrorKind::GridMismatch, "grid spacing must be positive");
    for (auto c : grid.cells)
        if (c == 0)
            throw Error(ErrorKind::GridMismatch, "grid needs at least one cell per axis");
}

} // namespace

double Mollifier::bump_integral(std::size_t dim)
{
    if (dim == 1)
        return kBumpIntegral1D;
    static std::mutex mu;
    static std::vector<double> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (cache.size() <= dim)
        cache.resize(dim + 1, 0.0);
    if (cache[dim] == 0.0) {
        // Composite 16-point Gauss-Legendre; the integrand is smooth and flat at r = 1.
        gsl_integration_glfixed_table* gl = gsl_integration_glfixed_table_alloc(16);
        struct P {
            double m;
        } p{static_cast<double>(dim)};
        gsl_function f;
        f.function = [](double r, void* params) {
            return std::pow(r, static_cast<P*>(params)->m - 1.0) * bump(r * r);
        };
        f.params = &p;
        const std::size_t panels = 1024;
        double result = 0.0;
        for (std::size_t k = 0; k < panels; ++k)
            result += gsl_integration_glfixed(&f, static_cast<double>(k) / panels,
                                              static_cast<double>(k + 1) / panels, gl);
        gsl_integration_glfixed_table_free(gl);
        double half = 0.5 * static_cast<double>(dim);
        double sphere = 2.0 * std::pow(M_PI, half) / gsl_sf_gamma(half);
        cache[dim] = sphere * result;
    }
    return cache[dim];
}

double Mollifier::operator()(std::span<const double> x) const
{
    if (x.size() != dim)
        throw Error(ErrorKind::DimensionMismatch, "mollifier evaluated at a point of the wrong dimension");
    double r2 = 0.0;
    for (double v : x)
        r2 += v * v * n * n;
    return std::pow(static_cast<double>(n), static_cast<double>(dim)) * bump(r2) / bump_integral(dim);
}

UniformGrid UniformGrid::line(double x_min, double dx, std::size_t cells)
{
    return UniformGrid{1, {x_min}, dx, {cells}};
}

std::size_t UniformGrid::total_cells() const
{
    std::size_t n = 1;
    for (auto c : cells)
        n *= c;
    return n;
}

double UniformGrid::cell_volume() const { return std::pow(dx, static_cast<double>(dim)); }

std::vector<double> mollify_to_grid(const EmpiricalMeasure& mu, const Mollifier& moll, const UniformGrid& grid)
{
    check_grid(grid);
    if (moll.n < 1)
        throw Error(ErrorKind::InvalidState, "mollifier index must be at least 1");
    if (mu.dim() != grid.dim || moll.dim != grid.dim)
        throw Error(ErrorKind::DimensionMismatch, "measure, mollifier and grid dimensions differ");
    const std::size_t m = grid.dim;
    const double rad = moll.radius();
    for (std::size_t k = 0; k < mu.size(); ++k) {
        auto p = mu.point(k);
        for (std::size_t a = 0; a < m; ++a) {
            double lo = grid.lower[a], hi = grid.lower[a] + grid.dx * static_cast<double>(grid.cells[a]);
            if (p[a] - rad < lo || p[a] + rad > hi)
                throw Error(ErrorKind::GridTooSmall,
                            fmt::format("support point {} inflated by {} leaves the grid on axis {}", k, rad, a));
        }
    }

    std::vector<double> out(grid.total_cells(), 0.0);
    if (m == 1) {
        const BumpCdf& cdf = bump_cdf();
        const double x0 = grid.lower[0], dx = grid.dx, n = moll.n;
        const auto ncell = static_cast<long>(grid.cells[0]);
        for (std::size_t k = 0; k < mu.size(); ++k) {
            double x = mu.points()[k];
            long first = std::max(0L, static_cast<long>(std::floor((x - rad - x0) / dx)) - 1);
            long last = std::min(ncell - 1, static_cast<long>(std::floor((x + rad - x0) / dx)) + 1);
            double prev = cdf(n * (x0 + dx * static_cast<double>(first) - x));
            for (long c = first; c <= last; ++c) {
                double next = cdf(n * (x0 + dx * static_cast<double>(c + 1) - x));
                // Cubic interpolation of the CDF can dip by rounding in the flat tails.
                out[static_cast<std::size_t>(c)] += mu.weight(k) * std::max(0.0, next - prev) / dx;
                prev = next;
            }
        }
        return out;
    }

    // m >= 2: tensor Gauss-Legendre on sub-cells, then per-particle renormalization.
    gsl_integration_glfixed_table* gl = gsl_integration_glfixed_table_alloc(4);
    std::vector<double> node(4), wnode(4);
    for (std::size_t q = 0; q < 4; ++q)
        gsl_integration_glfixed_point(-1.0, 1.0, q, &node[q], &wnode[q], gl);
    gsl_integration_glfixed_table_free(gl);
    const std::size_t sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(4.0 * grid.dx / rad)));
    const double h = grid.dx / static_cast<double>(sub);

    std::vector<std::size_t> stride(m, 1);
    for (std::size_t a = m - 1; a > 0; --a)
        stride[a - 1] = stride[a] * grid.cells[a];

    std::vector<double> local;
    std::vector<std::size_t> lo(m), hi(m), idx(m), sidx(m), qidx(m);
    std::vector<double> y(m);
    for (std::size_t k = 0; k < mu.size(); ++k) {
        auto p = mu.point(k);
        std::size_t count = 1;
        for (std::size_t a = 0; a < m; ++a) {
            lo[a] = static_cast<std::size_t>(std::max(0.0, std::floor((p[a] - rad - grid.lower[a]) / grid.dx)));
            hi[a] = std::min(grid.cells[a] - 1,
                             static_cast<std::size_t>(std::floor((p[a] + rad - grid.lower[a]) / grid.dx)));
            count *= hi[a] - lo[a] + 1;
        }
        local.assign(count, 0.0);
        double mass = 0.0;
        idx = lo;
        for (std::size_t c = 0; c < count; ++c) {
            double cell = 0.0;
            std::fill(sidx.begin(), sidx.end(), 0);
            bool sub_done = false;
            while (!sub_done) {
                std::fill(qidx.begin(), qidx.end(), 0);
                bool q_done = false;
                while (!q_done) {
                    double w = 1.0;
                    for (std::size_t a = 0; a < m; ++a) {
                        double base = grid.lower[a] + grid.dx * static_cast<double>(idx[a]) +
                                      h * static_cast<double>(sidx[a]);
                        y[a] = base + 0.5 * h * (node[qidx[a]] + 1.0) - p[a];
                        w *= 0.5 * h * wnode[qidx[a]];
                    }
                    cell += w * moll(y);
                    std::size_t a = m;
                    while (a > 0 && ++qidx[a - 1] == 4) {
                        qidx[a - 1] = 0;
                        --a;
                    }
                    q_done = a == 0;
                }
                std::size_t a = m;
                while (a > 0 && ++sidx[a - 1] == sub) {
                    sidx[a - 1] = 0;
                    --a;
                }
                sub_done = a == 0;
            }
            local[c] = cell;
            mass += cell;
            std::size_t a = m;
            while (a > 0 && ++idx[a - 1] > hi[a - 1]) {
                idx[a - 1] = lo[a - 1];
                --a;
            }
        }
        if (!(mass > 0.0))
            throw Error(ErrorKind::GridTooSmall, "mollifier is not resolved by the grid");
        idx = lo;
        for (std::size_t c = 0; c < count; ++c) {
            std::size_t flat = 0;
            for (std::size_t a = 0; a < m; ++a)
                flat += idx[a] * stride[a];
            out[flat] += mu.weight(k) * local[c] / mass / grid.cell_volume();
            std::size_t a = m;
            while (a > 0 && ++idx[a - 1] > hi[a - 1]) {
                idx[a - 1] = lo[a - 1];
                --a;
            }
        }
    }
    return out;
}

} // namespace kinswarm
