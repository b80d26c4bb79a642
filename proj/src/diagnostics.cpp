#include "kinswarm/diagnostics.hpp"

#include "kinswarm/ensemble.hpp"
#include "kinswarm/error.hpp"
#include "kinswarm/parallel.hpp"
#include "kinswarm/transport.hpp"

#include <fmt/format.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

namespace kinswarm {

void DiagnosticsSeries::declare(const std::string& name, const std::string& unit)
{
    if (name.empty() || name == "t")
        throw Error(ErrorKind::InvalidState, "channel name must be non-empty and not 't'");
    if (columns_.count(name))
        throw Error(ErrorKind::InvalidState, "channel '" + name + "' declared twice");
    if (!times_.empty())
        throw Error(ErrorKind::InvalidState, "channels must be declared before the first row");
    names_.push_back(name);
    units_[name] = unit;
    columns_[name];
}

void DiagnosticsSeries::append(double t, const std::map<std::string, double>& row)
{
    if (!times_.empty() && !(t > times_.back()))
        throw Error(ErrorKind::InvalidState, fmt::format("time {} does not increase past {}", t, times_.back()));
    for (const auto& name : names_)
        if (!row.count(name))
            throw Error(ErrorKind::InvalidState, "row misses channel '" + name + "'");
    if (row.size() != names_.size())
        throw Error(ErrorKind::InvalidState, "row carries undeclared channels");
    times_.push_back(t);
    for (const auto& name : names_)
        columns_[name].push_back(row.at(name));
}

const std::string& DiagnosticsSeries::unit(const std::string& name) const
{
    auto it = units_.find(name);
    if (it == units_.end())
        throw Error(ErrorKind::InvalidState, "unknown channel '" + name + "'");
    return it->second;
}

const std::vector<double>& DiagnosticsSeries::channel(const std::string& name) const
{
    auto it = columns_.find(name);
    if (it == columns_.end())
        throw Error(ErrorKind::InvalidState, "unknown channel '" + name + "'");
    return it->second;
}

std::string DiagnosticsSeries::to_csv() const
{
    fmt::memory_buffer out;
    fmt::format_to(std::back_inserter(out), "t");
    for (const auto& n : names_)
        fmt::format_to(std::back_inserter(out), ",{}", n);
    out.push_back('\n');
    for (std::size_t r = 0; r < times_.size(); ++r) {
        fmt::format_to(std::back_inserter(out), "{:.17g}", times_[r]);
        for (const auto& n : names_)
            fmt::format_to(std::back_inserter(out), ",{:.17g}", columns_.at(n)[r]);
        out.push_back('\n');
    }
    return fmt::to_string(out);
}

std::string DiagnosticsSeries::sidecar_json(const std::string& config_hash) const
{
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["time_unit"] = "time";
    j["channels"] = nlohmann::ordered_json::array();
    for (const auto& n : names_)
        j["channels"].push_back({{"name", n}, {"unit", units_.at(n)}});
    return j.dump(2) + "\n";
}

std::vector<double> velocity_alignment(const MultiSpeciesState& state, const KernelMatrix& kernels)
{
    if (!state.has_velocities())
        throw Error(ErrorKind::MissingVelocities, "velocity alignment needs velocities");
    return velocity_alignment(state, particle_fields(kernels, state.positions_only()));
}

std::vector<double> velocity_alignment(const MultiSpeciesState& state,
                                       const std::vector<std::vector<double>>& fields)
{
    if (!state.has_velocities())
        throw Error(ErrorKind::MissingVelocities, "velocity alignment needs velocities");
    if (fields.size() != state.species_count())
        throw Error(ErrorKind::SpeciesCountMismatch, "one field array per species is required");
    const std::size_t d = state.dim();
    std::vector<double> out;
    for (std::size_t i = 0; i < state.species_count(); ++i) {
        const auto& s = state[i];
        const auto& e = fields[i];
        const auto& v = *s.velocities();
        if (e.size() != v.size())
            throw Error(ErrorKind::DimensionMismatch, "field and velocity arrays differ in size");
        double total = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            double r2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                double diff = v[k * d + c] - e[k * d + c];
                r2 += diff * diff;
            }
            total += s.weight(k) * std::sqrt(r2);
        }
        out.push_back(total);
    }
    return out;
}

namespace {

double pair_sum(const SpeciesEnsemble& a, const SpeciesEnsemble& b, const KernelSpec& kernel, bool skip_self)
{
    const std::size_t d = a.dim();
    const bool singular = is_singular(kernel);
    std::vector<double> rows(a.size(), 0.0);
    parallel_for(a.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            auto x = a.position(k);
            double acc = 0.0;
            for (std::size_t h = 0; h < b.size(); ++h) {
                auto y = b.position(h);
                double r2 = 0.0;
                for (std::size_t c = 0; c < d; ++c)
                    r2 += (x[c] - y[c]) * (x[c] - y[c]);
                if (singular && r2 == 0.0 && skip_self)
                    continue;
                acc += b.weight(h) * potential_at_r2(kernel, r2);
            }
            rows[k] = a.weight(k) * acc;
        }
    });
    double total = 0.0;
    for (double r : rows)
        total += r;
    return total;
}

} // namespace

double free_energy(const MultiSpeciesState& state, const KernelMatrix& kernels, EnergyOptions options)
{
    if (state.species_count() != kernels.species())
        throw Error(ErrorKind::SpeciesCountMismatch, "state and kernel matrix disagree on species count");
    if (state.species_count() && state.dim() != kernels.dim())
        throw Error(ErrorKind::DimensionMismatch, "state and kernel matrix disagree on dimension");
    double total = 0.0;
    for (std::size_t i = 0; i < kernels.species(); ++i)
        for (std::size_t j = 0; j < kernels.species(); ++j)
            if (!std::holds_alternative<ZeroKernel>(kernels(i, j)))
                total += pair_sum(state[i], state[j], kernels(i, j), options.skip_self);
    return total;
}

double interaction_energy(const MultiSpeciesState& state, std::size_t species, const KernelSpec& kernel,
                          EnergyOptions options)
{
    if (species >= state.species_count())
        throw Error(ErrorKind::InvalidState, fmt::format("species index {} out of range", species));
    return pair_sum(state[species], state[species], kernel, options.skip_self);
}

std::vector<double> second_moment_energy(const MultiSpeciesState& state)
{
    if (!state.has_velocities())
        throw Error(ErrorKind::MissingVelocities, "second moment energy needs velocities");
    std::vector<double> out;
    for (const auto& s : state.species()) {
        double total = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            double r2 = 0.0;
            for (double x : s.position(k))
                r2 += x * x;
            for (double v : s.velocity(k))
                r2 += v * v;
            total += s.weight(k) * 0.5 * r2;
        }
        out.push_back(total);
    }
    return out;
}

double lp_norm(std::span<const double> values, double cell_volume, double p)
{
    if (!(p >= 1.0))
        throw Error(ErrorKind::InvalidState, "L^p norm needs p >= 1");
    if (std::isinf(p)) {
        double best = 0.0;
        for (double v : values)
            best = std::max(best, std::abs(v));
        return best;
    }
    double total = 0.0;
    for (double v : values)
        total += std::pow(std::abs(v), p);
    return std::pow(total * cell_volume, 1.0 / p);
}

double lp_norm(const DensityGrid1D& density, std::size_t species, double p)
{
    return lp_norm(density.values.at(species), density.dx, p);
}

namespace {

struct TentParams {
    const KernelSpec* kernel;
    double center;
    double dx;
};

double tent_integrand(double s, void* raw)
{
    const auto* p = static_cast<const TentParams*>(raw);
    double x = p->center + s;
    return (1.0 - std::abs(s) / p->dx) * potential_at_r2(*p->kernel, x * x);
}

} // namespace

GridInteraction::GridInteraction(const KernelSpec& kernel, double dx, std::size_t cells)
    : dx_(dx), cells_(cells), table_(cells ? 2 * cells - 1 : 0, 0.0)
{
    if (!(dx > 0.0) || cells == 0)
        throw Error(ErrorKind::GridMismatch, "interaction stencil needs a nonempty grid");
    if (const auto* k = std::get_if<RieszKernel>(&kernel); k && k->alpha >= 1.0)
        throw Error(ErrorKind::QuadratureDivergence,
                    fmt::format("grid interaction of the Riesz kernel needs alpha < 1, got {}", k->alpha));
    gsl_integration_workspace* ws = gsl_integration_workspace_alloc(500);
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    for (std::size_t m = 0; m < cells; ++m) {
        TentParams params{&kernel, dx * static_cast<double>(m), dx};
        gsl_function f{&tent_integrand, &params};
        double left = 0.0, right = 0.0, err = 0.0;
        int status = gsl_integration_qags(&f, -dx, 0.0, 0.0, 1e-12, 500, ws, &left, &err);
        status |= gsl_integration_qags(&f, 0.0, dx, 0.0, 1e-12, 500, ws, &right, &err);
        if (status != GSL_SUCCESS && status != GSL_EROUND) {
            gsl_set_error_handler(old);
            gsl_integration_workspace_free(ws);
            throw Error(ErrorKind::QuadratureDivergence,
                        fmt::format("tent quadrature failed at offset {}: {}", m, gsl_strerror(status)));
        }
        double v = (left + right) / dx;
        table_[cells - 1 + m] = v;
        table_[cells - 1 - m] = v;
    }
    gsl_set_error_handler(old);
    gsl_integration_workspace_free(ws);
}

double GridInteraction::form(std::span<const double> a, std::span<const double> b) const
{
    if (a.size() != cells_ || b.size() != cells_)
        throw Error(ErrorKind::GridMismatch, "density length differs from the stencil grid");
    std::vector<double> rows(cells_, 0.0);
    parallel_for(cells_, [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            if (a[c] == 0.0)
                continue;
            const double* t = table_.data() + (c + cells_ - 1);
            double acc = 0.0;
            for (std::size_t cc = 0; cc < cells_; ++cc)
                acc += b[cc] * t[-static_cast<std::ptrdiff_t>(cc)];
            rows[c] = a[c] * acc;
        }
    });
    double total = 0.0;
    for (double r : rows)
        total += r;
    return total * dx_ * dx_;
}

int grid_mollifier_index(double dx)
{
    return std::max(1, static_cast<int>(std::lround(1.0 / (2.0 * dx))));
}

ModulatedEnergy modulated_energy(const MultiSpeciesState& kinetic, const DensityGrid1D& rho,
                                 const VelocityFieldSample& u, double epsilon, std::span<const GridInteraction> stencils,
                                 int mollifier_n)
{
    if (!kinetic.has_velocities())
        throw Error(ErrorKind::MissingVelocities, "modulated energy needs kinetic velocities");
    if (kinetic.dim() != 1)
        throw Error(ErrorKind::DimensionMismatch, "modulated energy is evaluated on a 1-D grid");
    if (!(epsilon > 0.0))
        throw Error(ErrorKind::InvalidState, "epsilon must be positive");
    const std::size_t ns = kinetic.species_count();
    if (rho.species() != ns || u.values.size() != ns || stencils.size() != ns)
        throw Error(ErrorKind::SpeciesCountMismatch, "kinetic state and reference disagree on species count");
    if (!u.on_grid() || u.x_min != rho.x_min || u.dx != rho.dx)
        throw Error(ErrorKind::GridMismatch, "reference velocity is not sampled on the density grid");
    for (std::size_t i = 0; i < ns; ++i)
        if (u.values[i].size() != rho.cells || rho.values[i].size() != rho.cells)
            throw Error(ErrorKind::GridMismatch, "reference arrays differ from the cell count");

    const int n = mollifier_n > 0 ? mollifier_n : grid_mollifier_index(rho.dx);
    const UniformGrid grid = rho.grid();
    ModulatedEnergy out;
    for (std::size_t i = 0; i < ns; ++i) {
        const auto& s = kinetic[i];
        const auto& v = *s.velocities();
        double kin = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            double diff = u.interpolate(i, s.positions()[k]) - v[k];
            kin += s.weight(k) * 0.5 * diff * diff;
        }
        out.kinetic_part += kin;

        std::vector<double> rho_eps = mollify_to_grid(EmpiricalMeasure::from_species(s), Mollifier{n, 1}, grid);
        std::vector<double> delta(rho.cells);
        for (std::size_t c = 0; c < rho.cells; ++c)
            delta[c] = rho.values[i][c] - rho_eps[c];
        out.interaction_part += stencils[i].form(delta, delta) / (2.0 * epsilon);
    }
    out.total = out.kinetic_part + out.interaction_part;
    return out;
}

ModulatedEnergy modulated_energy(const MultiSpeciesState& kinetic, const DensityGrid1D& rho,
                                 const VelocityFieldSample& u, double epsilon, const KernelMatrix& kernels,
                                 int mollifier_n)
{
    if (kernels.species() != kinetic.species_count())
        throw Error(ErrorKind::SpeciesCountMismatch, "kernel matrix and kinetic state disagree on species count");
    std::vector<GridInteraction> stencils;
    for (std::size_t i = 0; i < kernels.species(); ++i)
        stencils.emplace_back(kernels(i, i), rho.dx, rho.cells);
    return modulated_energy(kinetic, rho, u, epsilon, stencils, mollifier_n);
}

} // namespace kinswarm
