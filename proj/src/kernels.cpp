#include "kinswarm/kernels.hpp"

#include "kinswarm/error.hpp"
#include "kinswarm/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace kinswarm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// r^alpha from r^2 with cheap paths for the common exponents.
inline double pow_half(double r2, double alpha)
{
    if (alpha == 1.0)
        return std::sqrt(r2);
    if (alpha == 0.5)
        return std::sqrt(std::sqrt(r2));
    if (alpha == 2.0)
        return r2;
    return std::pow(r2, 0.5 * alpha);
}

// Gradient factors s(r^2) with grad K(x) = s x. Inlined into the field loops.
inline double factor(const ZeroKernel&, double) { return 0.0; }
inline double factor(const QuadraticKernel& k, double) { return k.a; }

inline double factor(const GaussianKernel& k, double r2)
{
    // Terms with a zero coefficient are skipped; they contribute exactly 0.
    double s = 0.0;
    if (k.c_att != 0.0)
        s += 2.0 * k.c_att / k.l_att * std::exp(-r2 / k.l_att);
    if (k.c_rep != 0.0)
        s -= 2.0 * k.c_rep / k.l_rep * std::exp(-r2 / k.l_rep);
    return s;
}

inline double factor(const MorseKernel& k, double r2)
{
    if (r2 == 0.0)
        return 0.0;
    double r = std::sqrt(r2);
    double g = k.c_att / k.l_att * std::exp(-r / k.l_att) - k.c_rep / k.l_rep * std::exp(-r / k.l_rep);
    return g / r;
}

inline double factor(const RieszKernel& k, double r2)
{
    if (r2 == 0.0)
        throw Error(ErrorKind::SingularEvaluation, "Riesz gradient evaluated at the origin");
    return -k.c * k.alpha / (pow_half(r2, k.alpha) * r2);
}

inline double factor(const RegularizedRieszKernel& k, double r2)
{
    if (r2 == 0.0)
        return 0.0;
    double ra = pow_half(r2, k.alpha);
    double den = ra + k.delta;
    return -k.c * k.alpha * (ra / r2) / (den * den);
}

double potential(const ZeroKernel&, double) { return 0.0; }
double potential(const QuadraticKernel& k, double r2) { return 0.5 * k.a * r2; }
double potential(const GaussianKernel& k, double r2)
{
    return -k.c_att * std::exp(-r2 / k.l_att) + k.c_rep * std::exp(-r2 / k.l_rep);
}
double potential(const MorseKernel& k, double r2)
{
    double r = std::sqrt(r2);
    return -k.c_att * std::exp(-r / k.l_att) + k.c_rep * std::exp(-r / k.l_rep);
}
double potential(const RieszKernel& k, double r2)
{
    if (r2 == 0.0)
        throw Error(ErrorKind::SingularEvaluation, "Riesz potential evaluated at the origin");
    return k.c / pow_half(r2, k.alpha);
}
double potential(const RegularizedRieszKernel& k, double r2) { return k.c / (pow_half(r2, k.alpha) + k.delta); }

void check_point(std::span<const double> x, std::size_t dim)
{
    if (x.size() != dim)
        throw Error(ErrorKind::DimensionMismatch,
                    fmt::format("point has {} coordinates, expected {}", x.size(), dim));
}

double norm2(std::span<const double> x)
{
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return s;
}

void validate_entry(const KernelSpec& spec, std::size_t dim, bool diagonal, std::size_t i, std::size_t j)
{
    auto fail = [&](const std::string& why) {
        throw Error(ErrorKind::InvalidKernel, fmt::format("K[{}][{}] ({}): {}", i, j, describe(spec), why));
    };
    auto finite = [&](std::initializer_list<double> vals) {
        for (double v : vals)
            if (!std::isfinite(v))
                fail("non-finite parameter");
    };
    std::visit(overloaded{
                   [&](const ZeroKernel&) {},
                   [&](const QuadraticKernel& k) { finite({k.a}); },
                   [&](const MorseKernel& k) {
                       finite({k.c_att, k.l_att, k.c_rep, k.l_rep});
                       if (!(k.l_att > 0.0) || !(k.l_rep > 0.0))
                           fail("length scales must be positive");
                   },
                   [&](const GaussianKernel& k) {
                       finite({k.c_att, k.l_att, k.c_rep, k.l_rep});
                       if (!(k.l_att > 0.0) || !(k.l_rep > 0.0))
                           fail("length scales must be positive");
                   },
                   [&](const RieszKernel& k) {
                       finite({k.c, k.alpha});
                       if (!diagonal)
                           fail("cross-species kernels must be smooth");
                       if (!(k.c > 0.0))
                           fail("C must be positive");
                       if (!(k.alpha > 0.0) || !(k.alpha < static_cast<double>(dim)))
                           fail(fmt::format("alpha must lie in (0, {})", dim));
                   },
                   [&](const RegularizedRieszKernel& k) {
                       finite({k.c, k.alpha, k.delta});
                       if (!(k.c > 0.0))
                           fail("C must be positive");
                       if (!(k.delta > 0.0))
                           fail("delta must be positive");
                       if (!(k.alpha > 0.0) || !(k.alpha < static_cast<double>(dim)))
                           fail(fmt::format("alpha must lie in (0, {})", dim));
                   },
               },
               spec);
}

// Radial description used by kernel_bounds: g = K'(r), gp = K''(r), and the
// tangential factor g/r, each with its r -> 0+ limit at r = 0.
struct Radial {
    double g = 0.0;
    double gp = 0.0;
    double t = 0.0;
};

Radial radial(const GaussianKernel& k, double r)
{
    double ea = std::exp(-r * r / k.l_att), er = std::exp(-r * r / k.l_rep);
    double s = 2.0 * k.c_att / k.l_att * ea - 2.0 * k.c_rep / k.l_rep * er;
    double gp = 2.0 * k.c_att / k.l_att * (1.0 - 2.0 * r * r / k.l_att) * ea -
                2.0 * k.c_rep / k.l_rep * (1.0 - 2.0 * r * r / k.l_rep) * er;
    return {s * r, gp, s};
}

Radial radial(const MorseKernel& k, double r)
{
    double ea = std::exp(-r / k.l_att), er = std::exp(-r / k.l_rep);
    double g = k.c_att / k.l_att * ea - k.c_rep / k.l_rep * er;
    double gp = -k.c_att / (k.l_att * k.l_att) * ea + k.c_rep / (k.l_rep * k.l_rep) * er;
    double t = r > 0.0 ? g / r : (g == 0.0 ? gp : kInf);
    return {g, gp, t};
}

Radial radial(const RegularizedRieszKernel& k, double r)
{
    const double c = k.c, a = k.alpha, d = k.delta;
    if (r > 0.0) {
        double ra = std::pow(r, a);
        double den = ra + d;
        double g = -c * a * std::pow(r, a - 1.0) / (den * den);
        double gp = c * a * std::pow(r, a - 2.0) * ((1.0 + a) * ra + (1.0 - a) * d) / (den * den * den);
        return {g, gp, g / r};
    }
    Radial out;
    out.g = a < 1.0 ? -kInf : (a == 1.0 ? -c / (d * d) : 0.0);
    if (a < 1.0)
        out.gp = kInf;
    else if (a == 1.0)
        out.gp = 2.0 * c / (d * d * d);
    else if (a < 2.0)
        out.gp = -kInf;
    else if (a == 2.0)
        out.gp = -2.0 * c / (d * d);
    else
        out.gp = 0.0;
    out.t = a < 2.0 ? -kInf : (a == 2.0 ? -2.0 * c / (d * d) : 0.0);
    return out;
}

// Maximizes h over [0, rmax]: dense sampling followed by golden-section
// refinement around every sampled local maximum.
template <class H>
double radial_max(H h, double rmax)
{
    const std::size_t n = kBoundsSamples;
    std::vector<double> vals(n + 1);
    for (std::size_t k = 0; k <= n; ++k)
        vals[k] = h(rmax * static_cast<double>(k) / static_cast<double>(n));
    double best = 0.0;
    for (double v : vals) {
        if (std::isinf(v))
            return kInf;
        best = std::max(best, v);
    }
    const double step = rmax / static_cast<double>(n);
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    for (std::size_t k = 1; k < n; ++k) {
        if (!(vals[k] >= vals[k - 1] && vals[k] >= vals[k + 1]))
            continue;
        double a = step * static_cast<double>(k - 1), b = step * static_cast<double>(k + 1);
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        double f1 = h(x1), f2 = h(x2);
        for (int it = 0; it < 80 && b - a > 1e-15 * rmax; ++it) {
            if (f1 < f2) {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = h(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = h(x1);
            }
        }
        best = std::max({best, f1, f2});
    }
    return best;
}

struct EntryBound {
    double sup = 0.0;
    double lip = 0.0;
    bool punctured = false;
};

template <class K>
EntryBound sampled_bound(const K& k, double rmax, std::size_t dim)
{
    EntryBound b;
    b.sup = radial_max([&](double r) { return std::abs(radial(k, r).g); }, rmax);
    b.lip = radial_max(
        [&](double r) {
            Radial q = radial(k, r);
            double v = std::abs(q.gp);
            if (dim >= 2)
                v = std::max(v, std::abs(q.t));
            return v;
        },
        rmax);
    return b;
}

EntryBound entry_bound(const KernelSpec& spec, double rmax, std::size_t dim)
{
    return std::visit(overloaded{
                          [&](const ZeroKernel&) { return EntryBound{}; },
                          [&](const QuadraticKernel& k) {
                              return EntryBound{std::abs(k.a) * rmax, std::abs(k.a), false};
                          },
                          [&](const GaussianKernel& k) { return sampled_bound(k, rmax, dim); },
                          [&](const MorseKernel& k) {
                              EntryBound b = sampled_bound(k, rmax, dim);
                              b.punctured = true;
                              return b;
                          },
                          [&](const RegularizedRieszKernel& k) {
                              EntryBound b = sampled_bound(k, rmax, dim);
                              b.punctured = k.alpha < 2.0;
                              return b;
                          },
                          [&](const RieszKernel&) -> EntryBound {
                              throw Error(ErrorKind::SingularEntry,
                                          "kernel_bounds needs smooth entries; regularize singular diagonals first");
                          },
                      },
                      spec);
}

template <class K>
void accumulate_species(const K& k, const SpeciesEnsemble& src, std::size_t dim, const double* q, double* acc,
                        bool skip_self)
{
    const double* z = src.positions().data();
    const double* w = src.weights().data();
    const std::size_t m = src.size();
    if (dim == 1) {
        double s = 0.0;
        for (std::size_t h = 0; h < m; ++h) {
            double dx = q[0] - z[h];
            double r2 = dx * dx;
            if constexpr (std::is_same_v<K, RieszKernel>) {
                if (r2 == 0.0 && skip_self)
                    continue;
            }
            s += w[h] * factor(k, r2) * dx;
        }
        acc[0] -= s;
        return;
    }
    double diff[16];
    std::vector<double> big;
    double* dx = diff;
    if (dim > 16) {
        big.resize(dim);
        dx = big.data();
    }
    for (std::size_t h = 0; h < m; ++h) {
        double r2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            dx[c] = q[c] - z[h * dim + c];
            r2 += dx[c] * dx[c];
        }
        if constexpr (std::is_same_v<K, RieszKernel>) {
            if (r2 == 0.0 && skip_self)
                continue;
        }
        double s = w[h] * factor(k, r2);
        for (std::size_t c = 0; c < dim; ++c)
            acc[c] -= s * dx[c];
    }
}

} // namespace

bool is_singular(const KernelSpec& spec) noexcept { return std::holds_alternative<RieszKernel>(spec); }

std::string describe(const KernelSpec& spec)
{
    return std::visit(overloaded{
                          [](const ZeroKernel&) { return std::string("zero"); },
                          [](const QuadraticKernel& k) { return fmt::format("quadratic(a={})", k.a); },
                          [](const MorseKernel& k) {
                              return fmt::format("morse(C_a={}, l_a={}, C_r={}, l_r={})", k.c_att, k.l_att,
                                                 k.c_rep, k.l_rep);
                          },
                          [](const GaussianKernel& k) {
                              return fmt::format("gaussian(C_a={}, l_a={}, C_r={}, l_r={})", k.c_att, k.l_att,
                                                 k.c_rep, k.l_rep);
                          },
                          [](const RieszKernel& k) { return fmt::format("riesz(C={}, alpha={})", k.c, k.alpha); },
                          [](const RegularizedRieszKernel& k) {
                              return fmt::format("regularized_riesz(C={}, alpha={}, delta={})", k.c, k.alpha,
                                                 k.delta);
                          },
                      },
                      spec);
}

double potential_at_r2(const KernelSpec& spec, double r2)
{
    return std::visit([r2](const auto& k) { return potential(k, r2); }, spec);
}

double grad_factor(const KernelSpec& spec, double r2)
{
    return std::visit([r2](const auto& k) { return factor(k, r2); }, spec);
}

double eval_potential(const KernelSpec& spec, std::span<const double> x, std::size_t dim)
{
    check_point(x, dim);
    return potential_at_r2(spec, norm2(x));
}

std::vector<double> eval_grad(const KernelSpec& spec, std::span<const double> x, std::size_t dim)
{
    check_point(x, dim);
    double s = grad_factor(spec, norm2(x));
    std::vector<double> out(x.begin(), x.end());
    for (double& v : out)
        v *= s;
    return out;
}

Regularized regularize(const KernelSpec& spec, double delta)
{
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw Error(ErrorKind::NotRegularizable, "delta must be positive and finite");
    if (const auto* k = std::get_if<RieszKernel>(&spec))
        return {RegularizedRieszKernel{k->c, k->alpha, delta}, false};
    return {spec, true};
}

KernelMatrix::KernelMatrix(std::size_t dim, std::size_t species, std::vector<KernelSpec> entries)
    : dim_(dim), species_(species), entries_(std::move(entries))
{
    if (dim_ == 0)
        throw Error(ErrorKind::InvalidKernel, "dimension must be at least 1");
    if (species_ == 0)
        throw Error(ErrorKind::InvalidKernel, "species count must be at least 1");
    if (entries_.size() != species_ * species_)
        throw Error(ErrorKind::InvalidKernel,
                    fmt::format("kernel matrix has {} entries, expected {}", entries_.size(), species_ * species_));
    for (std::size_t i = 0; i < species_; ++i)
        for (std::size_t j = 0; j < species_; ++j)
            validate_entry((*this)(i, j), dim_, i == j, i, j);
}

KernelMatrix KernelMatrix::uniform(std::size_t dim, std::size_t species, const KernelSpec& spec)
{
    return KernelMatrix(dim, species, std::vector<KernelSpec>(species * species, spec));
}

KernelMatrix KernelMatrix::zero(std::size_t dim, std::size_t species)
{
    return uniform(dim, species, ZeroKernel{});
}

namespace {

bool same_spec(const KernelSpec& a, const KernelSpec& b)
{
    if (a.index() != b.index())
        return false;
    return std::visit(overloaded{
                          [](const ZeroKernel&, const ZeroKernel&) { return true; },
                          [](const QuadraticKernel& x, const QuadraticKernel& y) { return x.a == y.a; },
                          [](const MorseKernel& x, const MorseKernel& y) {
                              return x.c_att == y.c_att && x.l_att == y.l_att && x.c_rep == y.c_rep &&
                                     x.l_rep == y.l_rep;
                          },
                          [](const GaussianKernel& x, const GaussianKernel& y) {
                              return x.c_att == y.c_att && x.l_att == y.l_att && x.c_rep == y.c_rep &&
                                     x.l_rep == y.l_rep;
                          },
                          [](const RieszKernel& x, const RieszKernel& y) { return x.c == y.c && x.alpha == y.alpha; },
                          [](const RegularizedRieszKernel& x, const RegularizedRieszKernel& y) {
                              return x.c == y.c && x.alpha == y.alpha && x.delta == y.delta;
                          },
                          [](const auto&, const auto&) { return false; },
                      },
                      a, b);
}

} // namespace

bool KernelMatrix::is_symmetric() const
{
    for (std::size_t i = 0; i < species_; ++i)
        for (std::size_t j = i + 1; j < species_; ++j)
            if (!same_spec((*this)(i, j), (*this)(j, i)))
                return false;
    return true;
}

bool KernelMatrix::has_singular() const
{
    return std::any_of(entries_.begin(), entries_.end(), [](const KernelSpec& s) { return is_singular(s); });
}

bool KernelMatrix::is_zero() const
{
    return std::all_of(entries_.begin(), entries_.end(),
                       [](const KernelSpec& s) { return std::holds_alternative<ZeroKernel>(s); });
}

KernelMatrix KernelMatrix::regularized(double delta) const
{
    std::vector<KernelSpec> out;
    out.reserve(entries_.size());
    for (const auto& s : entries_)
        out.push_back(regularize(s, delta).spec);
    return KernelMatrix(dim_, species_, std::move(out));
}

KernelBounds kernel_bounds(const KernelMatrix& matrix, double radius)
{
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw Error(ErrorKind::InvalidState, "kernel_bounds radius must be positive and finite");
    KernelBounds out;
    out.radius = radius;
    for (const auto& spec : matrix.entries()) {
        EntryBound b = entry_bound(spec, 2.0 * radius, matrix.dim());
        out.xi += b.sup;
        out.upsilon += b.lip;
        out.punctured = out.punctured || b.punctured;
    }
    return out;
}

std::vector<double> assemble_field(const KernelMatrix& matrix, const MultiSpeciesState& sources,
                                   std::size_t species, std::span<const double> queries, FieldOptions options)
{
    const std::size_t dim = matrix.dim();
    if (sources.species_count() != matrix.species())
        throw Error(ErrorKind::SpeciesCountMismatch,
                    fmt::format("state has {} species, kernel matrix {}", sources.species_count(), matrix.species()));
    if (sources.species_count() > 0 && sources.dim() != dim)
        throw Error(ErrorKind::DimensionMismatch,
                    fmt::format("state dimension {} differs from kernel dimension {}", sources.dim(), dim));
    if (species >= matrix.species())
        throw Error(ErrorKind::InvalidState, fmt::format("species index {} out of range", species));
    if (queries.size() % dim != 0)
        throw Error(ErrorKind::DimensionMismatch, "query array is not a multiple of the dimension");

    const std::size_t nq = queries.size() / dim;
    std::vector<double> out(queries.size(), 0.0);
    parallel_for(nq, [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = 0; j < matrix.species(); ++j) {
            const SpeciesEnsemble& src = sources[j];
            std::visit(
                [&](const auto& k) {
                    using K = std::decay_t<decltype(k)>;
                    if constexpr (std::is_same_v<K, ZeroKernel>) {
                        return;
                    } else {
                        for (std::size_t q = begin; q < end; ++q)
                            accumulate_species(k, src, dim, queries.data() + q * dim, out.data() + q * dim,
                                               options.skip_self);
                    }
                },
                matrix(species, j));
        }
    });
    return out;
}

} // namespace kinswarm
