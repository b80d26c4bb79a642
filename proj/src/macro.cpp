#include "kinswarm/macro.hpp"

#include "kinswarm/error.hpp"
#include "kinswarm/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace kinswarm {

double DensityGrid1D::mass(std::size_t i) const
{
    double s = 0.0;
    for (double v : values.at(i))
        s += v;
    return s * dx;
}

bool DensityGrid1D::same_grid(const DensityGrid1D& other) const
{
    return x_min == other.x_min && dx == other.dx && cells == other.cells && species() == other.species();
}

DensityGrid1D DensityGrid1D::from_particles(const MultiSpeciesState& state, double x_min, double dx,
                                            std::size_t cells, int mollifier_n)
{
    if (state.dim() != 1)
        throw Error(ErrorKind::DimensionMismatch, "density grids are one-dimensional");
    DensityGrid1D out;
    out.time = state.time();
    out.x_min = x_min;
    out.dx = dx;
    out.cells = cells;
    const UniformGrid grid = UniformGrid::line(x_min, dx, cells);
    for (const auto& s : state.species())
        out.values.push_back(mollify_to_grid(EmpiricalMeasure::from_species(s), Mollifier{mollifier_n, 1}, grid));
    return out;
}

double VelocityFieldSample::interpolate(std::size_t species, double x) const
{
    const auto& v = values.at(species);
    if (!on_grid() || v.empty())
        throw Error(ErrorKind::GridMismatch, "interpolation needs grid samples");
    double s = (x - x_min) / dx - 0.5;
    if (s <= 0.0)
        return v.front();
    const double last = static_cast<double>(v.size() - 1);
    if (s >= last)
        return v.back();
    auto k = static_cast<std::size_t>(s);
    double t = s - static_cast<double>(k);
    return (1.0 - t) * v[k] + t * v[k + 1];
}

std::vector<double> velocity_field(const MultiSpeciesState& rho, const KernelMatrix& kernels, std::size_t species,
                                   std::span<const double> queries)
{
    std::vector<double> u = assemble_field(kernels, rho, species, queries);
    for (double& v : u)
        v = -v;
    return u;
}

namespace {

void check_grid_route(const DensityGrid1D& rho, const KernelMatrix& kernels)
{
    if (kernels.dim() != 1)
        throw Error(ErrorKind::DimensionMismatch, "the grid route is one-dimensional");
    if (rho.species() != kernels.species())
        throw Error(ErrorKind::SpeciesCountMismatch,
                    fmt::format("grid has {} species, kernel matrix {}", rho.species(), kernels.species()));
    if (!(rho.dx > 0.0) || rho.cells == 0)
        throw Error(ErrorKind::GridMismatch, "grid needs positive spacing and at least one cell");
    for (const auto& row : rho.values)
        if (row.size() != rho.cells)
            throw Error(ErrorKind::GridMismatch, "grid row length differs from the cell count");
    for (const auto& spec : kernels.entries())
        if (const auto* k = std::get_if<RieszKernel>(&spec); k && k->alpha >= 1.0)
            throw Error(ErrorKind::QuadratureDivergence,
                        fmt::format("grid quadrature of the Riesz gradient needs alpha < 1, got {}", k->alpha));
}

// grad K(x) for scalar x, with the singular origin mapped to 0 (skipped cell).
double grad_1d(const KernelSpec& spec, double x)
{
    if (x == 0.0)
        return 0.0;
    return grad_factor(spec, x * x) * x;
}

} // namespace

std::vector<double> velocity_field(const DensityGrid1D& rho, const KernelMatrix& kernels, std::size_t species,
                                   std::span<const double> queries)
{
    check_grid_route(rho, kernels);
    if (species >= kernels.species())
        throw Error(ErrorKind::InvalidState, fmt::format("species index {} out of range", species));
    std::vector<double> out(queries.size(), 0.0);
    parallel_for(queries.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t q = begin; q < end; ++q) {
            const double x = queries[q];
            const double s = (x - rho.x_min) / rho.dx;
            const long own = s >= 0.0 && s < static_cast<double>(rho.cells) ? static_cast<long>(s) : -1;
            double total = 0.0;
            for (std::size_t j = 0; j < kernels.species(); ++j) {
                const KernelSpec& spec = kernels(species, j);
                const bool singular = is_singular(spec);
                double acc = 0.0;
                for (std::size_t c = 0; c < rho.cells; ++c) {
                    if (singular && static_cast<long>(c) == own)
                        continue;
                    acc += rho.values[j][c] * grad_1d(spec, x - rho.center(c));
                }
                total += acc * rho.dx;
            }
            out[q] = total;
        }
    });
    return out;
}

VelocityFieldSample velocity_on_grid(const DensityGrid1D& rho, const KernelMatrix& kernels)
{
    check_grid_route(rho, kernels);
    const std::size_t n = rho.cells, ns = kernels.species();
    VelocityFieldSample out;
    out.x_min = rho.x_min;
    out.dx = rho.dx;
    out.values.assign(ns, std::vector<double>(n, 0.0));
    // Toeplitz stencil table[m + n - 1] = grad K(m dx) for m in (-n, n).
    std::vector<std::vector<double>> table(ns * ns);
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < ns; ++j) {
            auto& t = table[i * ns + j];
            t.resize(2 * n - 1);
            for (std::size_t k = 0; k < t.size(); ++k) {
                double m = static_cast<double>(k) - static_cast<double>(n - 1);
                t[k] = grad_1d(kernels(i, j), m * rho.dx);
            }
        }
    for (std::size_t i = 0; i < ns; ++i) {
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t c = begin; c < end; ++c) {
                double total = 0.0;
                for (std::size_t j = 0; j < ns; ++j) {
                    if (std::holds_alternative<ZeroKernel>(kernels(i, j)))
                        continue;
                    const double* t = table[i * ns + j].data() + (c + n - 1);
                    const double* r = rho.values[j].data();
                    double acc = 0.0;
                    for (std::size_t cc = 0; cc < n; ++cc)
                        acc += r[cc] * t[-static_cast<std::ptrdiff_t>(cc)];
                    total += acc * rho.dx;
                }
                out.values[i][c] = total;
            }
        });
    }
    return out;
}

FieldEvaluator grid_particle_field(const KernelMatrix& kernels, double x_min, double dx, std::size_t cells,
                                   int mollifier_n)
{
    if (kernels.dim() != 1)
        throw Error(ErrorKind::DimensionMismatch, "the grid field is one-dimensional");
    const int n = mollifier_n > 0 ? mollifier_n : std::max(1, static_cast<int>(std::lround(0.5 / dx)));
    return [kernels, x_min, dx, cells, n](const MultiSpeciesState& s) {
        const DensityGrid1D rho = DensityGrid1D::from_particles(s, x_min, dx, cells, n);
        const VelocityFieldSample u = velocity_on_grid(rho, kernels);
        std::vector<std::vector<double>> out(s.species_count());
        for (std::size_t i = 0; i < s.species_count(); ++i) {
            const auto& z = s[i].positions();
            out[i].resize(z.size());
            for (std::size_t k = 0; k < z.size(); ++k)
                out[i][k] = -u.interpolate(i, z[k]);
        }
        return out;
    };
}

std::vector<MultiSpeciesState> macro_particle_solve(const MultiSpeciesState& rho0, const KernelMatrix& kernels,
                                                    double horizon, double dt, Scheme scheme, std::size_t stride)
{
    if (!(horizon >= 0.0) || !(dt > 0.0))
        throw Error(ErrorKind::InvalidState, "horizon must be nonnegative and dt positive");
    stride = std::max<std::size_t>(stride, 1);
    std::vector<MultiSpeciesState> out{rho0.positions_only()};
    if (horizon == 0.0)
        return out;
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9)));
    const IntegratorConfig cfg{scheme, horizon / static_cast<double>(steps), 1.0};
    MultiSpeciesState s = out.front();
    for (std::size_t n = 1; n <= steps; ++n) {
        s = step_first_order(s, kernels, cfg);
        if (n % stride == 0 || n == steps)
            out.push_back(s.with_time(rho0.time() + cfg.dt * static_cast<double>(n)));
    }
    return out;
}

std::vector<DensityGrid1D> grid_solve_1d(const DensityGrid1D& rho0, const KernelMatrix& kernels, double horizon,
                                         double dt, const GridSolveOptions& options)
{
    check_grid_route(rho0, kernels);
    if (!(horizon >= 0.0) || !(dt > 0.0))
        throw Error(ErrorKind::InvalidState, "horizon must be nonnegative and dt positive");
    for (const auto& row : rho0.values)
        for (double v : row)
            if (!(v >= 0.0))
                throw Error(ErrorKind::InvalidState, "initial density must be nonnegative");
    const std::size_t stride = std::max<std::size_t>(options.stride, 1);
    std::vector<DensityGrid1D> out{rho0};
    if (horizon == 0.0)
        return out;
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9)));
    const double h = horizon / static_cast<double>(steps);
    const std::size_t n = rho0.cells;

    DensityGrid1D rho = rho0;
    std::vector<double> flux(n + 1, 0.0);
    for (std::size_t step = 1; step <= steps; ++step) {
        VelocityFieldSample u = velocity_on_grid(rho, kernels);
        for (std::size_t i = 0; i < rho.species(); ++i) {
            const auto& ui = u.values[i];
            double umax = 0.0;
            for (double v : ui)
                umax = std::max(umax, std::abs(v));
            if (h * umax > options.cfl * rho.dx)
                throw Error(ErrorKind::CFLViolation,
                            fmt::format("dt = {:.3g} exceeds {} dx / max|u| = {:.3g} at t = {:.6g}", h, options.cfl,
                                        options.cfl * rho.dx / umax, rho.time));
            auto& r = rho.values[i];
            flux[0] = flux[n] = 0.0;
            for (std::size_t f = 1; f < n; ++f) {
                // Transport velocity is -u; upwind on its sign.
                const double a = -0.5 * (ui[f - 1] + ui[f]);
                flux[f] = a > 0.0 ? a * r[f - 1] : (a < 0.0 ? a * r[f] : 0.0);
            }
            for (std::size_t c = 0; c < n; ++c)
                r[c] -= h / rho.dx * (flux[c + 1] - flux[c]);
        }
        rho.time = rho0.time + h * static_cast<double>(step);
        if (step % stride == 0 || step == steps)
            out.push_back(rho);
    }
    return out;
}

VelocityFieldSample material_derivative(const VelocityFieldSample& u_now, const VelocityFieldSample& u_prev,
                                        double dt)
{
    if (!u_now.on_grid() || u_now.x_min != u_prev.x_min || u_now.dx != u_prev.dx ||
        u_now.values.size() != u_prev.values.size())
        throw Error(ErrorKind::GridMismatch, "velocity samples live on different grids");
    if (!(dt > 0.0))
        throw Error(ErrorKind::InvalidState, "dt must be positive");
    VelocityFieldSample e;
    e.x_min = u_now.x_min;
    e.dx = u_now.dx;
    for (std::size_t i = 0; i < u_now.values.size(); ++i) {
        const auto& a = u_now.values[i];
        const auto& b = u_prev.values[i];
        if (a.size() != b.size())
            throw Error(ErrorKind::GridMismatch, "velocity samples differ in length");
        const std::size_t n = a.size();
        std::vector<double> out(n, 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            double grad = 0.0;
            if (n >= 2) {
                if (c == 0)
                    grad = (a[1] - a[0]) / u_now.dx;
                else if (c == n - 1)
                    grad = (a[n - 1] - a[n - 2]) / u_now.dx;
                else
                    grad = (a[c + 1] - a[c - 1]) / (2.0 * u_now.dx);
            }
            out[c] = (a[c] - b[c]) / dt + a[c] * grad;
        }
        e.values.push_back(std::move(out));
    }
    return e;
}

} // namespace kinswarm
