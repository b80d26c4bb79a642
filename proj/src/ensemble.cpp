#include "kinswarm/ensemble.hpp"

#include "kinswarm/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace kinswarm {

std::string_view to_string(Scheme scheme) noexcept
{
    switch (scheme) {
    case Scheme::Euler: return "euler";
    case Scheme::Rk4: return "rk4";
    case Scheme::ExpEuler: return "exp-euler";
    case Scheme::Strang: return "strang";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name)
{
    if (name == "euler")
        return Scheme::Euler;
    if (name == "rk4")
        return Scheme::Rk4;
    if (name == "exp-euler" || name == "exp_euler")
        return Scheme::ExpEuler;
    if (name == "strang")
        return Scheme::Strang;
    throw Error(ErrorKind::ConfigInvalid, fmt::format("unknown integrator scheme '{}'", name));
}

ExpEulerCoefficients exp_euler_coefficients(double dt, double epsilon)
{
    const double h = dt / epsilon;
    ExpEulerCoefficients c;
    c.decay = std::exp(-h);
    c.relax = -std::expm1(-h);
    c.drift_u = epsilon * c.relax;
    // h + expm1(-h) cancels badly for small h; use its Taylor series there.
    double tail;
    if (h < 1e-2) {
        tail = 0.0;
        double term = h * h / 2.0;
        for (int k = 3; k < 12; ++k) {
            tail += term;
            term *= -h / k;
        }
    } else {
        tail = h + std::expm1(-h);
    }
    c.drift_e = epsilon * tail;
    return c;
}

namespace {

void check_config(const IntegratorConfig& cfg, bool second_order)
{
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt))
        throw Error(ErrorKind::InvalidState, "dt must be positive and finite");
    if (second_order && (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon)))
        throw Error(ErrorKind::InvalidState, "epsilon must be positive and finite");
}

using Coords = std::vector<std::vector<double>>;

MultiSpeciesState with_positions(const MultiSpeciesState& base, const Coords& pos, const Coords* vel, double t)
{
    std::vector<SpeciesEnsemble> sp;
    sp.reserve(base.species_count());
    for (std::size_t i = 0; i < base.species_count(); ++i) {
        std::optional<std::vector<double>> v;
        if (vel)
            v = (*vel)[i];
        sp.push_back(base[i].with_coordinates(pos[i], std::move(v)));
    }
    return MultiSpeciesState(t, std::move(sp));
}

Coords positions_of(const MultiSpeciesState& s)
{
    Coords out;
    for (const auto& e : s.species())
        out.push_back(e.positions());
    return out;
}

Coords velocities_of(const MultiSpeciesState& s)
{
    Coords out;
    for (const auto& e : s.species())
        out.push_back(*e.velocities());
    return out;
}

// out = a + c * b, elementwise over species.
Coords axpy(const Coords& a, double c, const Coords& b)
{
    Coords out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t k = 0; k < out[i].size(); ++k)
            out[i][k] += c * b[i][k];
    return out;
}

Coords fields_at(const FieldEvaluator& field, const MultiSpeciesState& base, const Coords& pos)
{
    return field(with_positions(base, pos, nullptr, base.time()));
}

FieldEvaluator direct_field(const KernelMatrix& kernels)
{
    return [&kernels](const MultiSpeciesState& s) { return particle_fields(kernels, s); };
}

} // namespace

std::vector<std::vector<double>> particle_fields(const KernelMatrix& kernels, const MultiSpeciesState& state)
{
    std::vector<std::vector<double>> out;
    out.reserve(state.species_count());
    for (std::size_t i = 0; i < state.species_count(); ++i)
        out.push_back(assemble_field(kernels, state, i, state[i].positions()));
    return out;
}

MultiSpeciesState step_first_order(const MultiSpeciesState& state, const KernelMatrix& kernels,
                                   const IntegratorConfig& cfg)
{
    return step_first_order(state, direct_field(kernels), cfg);
}

MultiSpeciesState step_first_order(const MultiSpeciesState& state, const FieldEvaluator& field,
                                   const IntegratorConfig& cfg)
{
    check_config(cfg, false);
    const double dt = cfg.dt;
    const Coords z = positions_of(state);
    Coords next;
    switch (cfg.scheme) {
    case Scheme::Euler:
        next = axpy(z, dt, fields_at(field, state, z));
        break;
    case Scheme::Rk4: {
        Coords k1 = fields_at(field, state, z);
        Coords k2 = fields_at(field, state, axpy(z, 0.5 * dt, k1));
        Coords k3 = fields_at(field, state, axpy(z, 0.5 * dt, k2));
        Coords k4 = fields_at(field, state, axpy(z, dt, k3));
        next = z;
        for (std::size_t i = 0; i < next.size(); ++i)
            for (std::size_t k = 0; k < next[i].size(); ++k)
                next[i][k] += dt / 6.0 * (k1[i][k] + 2.0 * k2[i][k] + 2.0 * k3[i][k] + k4[i][k]);
        break;
    }
    case Scheme::ExpEuler:
    case Scheme::Strang:
        throw Error(ErrorKind::SchemeMismatch,
                    fmt::format("scheme {} applies to second-order stepping only", to_string(cfg.scheme)));
    }
    std::optional<Coords> vel;
    if (state.has_velocities())
        vel = velocities_of(state);
    return with_positions(state, next, vel ? &*vel : nullptr, state.time() + dt);
}

MultiSpeciesState step_second_order(const MultiSpeciesState& state, const KernelMatrix& kernels,
                                    const IntegratorConfig& cfg)
{
    return step_second_order(state, direct_field(kernels), cfg);
}

MultiSpeciesState step_second_order(const MultiSpeciesState& state, const FieldEvaluator& field,
                                    const IntegratorConfig& cfg)
{
    check_config(cfg, true);
    if (!state.has_velocities())
        throw Error(ErrorKind::MissingVelocities, "second-order stepping needs velocities");
    const double dt = cfg.dt, eps = cfg.epsilon;
    Coords z = positions_of(state);
    Coords u = velocities_of(state);

    switch (cfg.scheme) {
    case Scheme::Euler: {
        Coords e = fields_at(field, state, z);
        for (std::size_t i = 0; i < z.size(); ++i)
            for (std::size_t k = 0; k < z[i].size(); ++k) {
                double uk = u[i][k];
                z[i][k] += dt * uk;
                u[i][k] += dt / eps * (e[i][k] - uk);
            }
        break;
    }
    case Scheme::Rk4: {
        auto accel = [&](const Coords& zz, const Coords& uu) {
            Coords e = fields_at(field, state, zz);
            for (std::size_t i = 0; i < e.size(); ++i)
                for (std::size_t k = 0; k < e[i].size(); ++k)
                    e[i][k] = (e[i][k] - uu[i][k]) / eps;
            return e;
        };
        Coords a1 = accel(z, u);
        Coords z2 = axpy(z, 0.5 * dt, u), u2 = axpy(u, 0.5 * dt, a1);
        Coords a2 = accel(z2, u2);
        Coords z3 = axpy(z, 0.5 * dt, u2), u3 = axpy(u, 0.5 * dt, a2);
        Coords a3 = accel(z3, u3);
        Coords z4 = axpy(z, dt, u3), u4 = axpy(u, dt, a3);
        Coords a4 = accel(z4, u4);
        for (std::size_t i = 0; i < z.size(); ++i)
            for (std::size_t k = 0; k < z[i].size(); ++k) {
                z[i][k] += dt / 6.0 * (u[i][k] + 2.0 * u2[i][k] + 2.0 * u3[i][k] + u4[i][k]);
                u[i][k] += dt / 6.0 * (a1[i][k] + 2.0 * a2[i][k] + 2.0 * a3[i][k] + a4[i][k]);
            }
        break;
    }
    case Scheme::ExpEuler: {
        const ExpEulerCoefficients c = exp_euler_coefficients(dt, eps);
        Coords e = fields_at(field, state, z);
        for (std::size_t i = 0; i < z.size(); ++i)
            for (std::size_t k = 0; k < z[i].size(); ++k) {
                double uk = u[i][k], ek = e[i][k];
                z[i][k] += c.drift_u * uk + c.drift_e * ek;
                u[i][k] = c.decay * uk + c.relax * ek;
            }
        break;
    }
    case Scheme::Strang: {
        // Half relaxation toward the field, drift, half relaxation.
        const ExpEulerCoefficients half = exp_euler_coefficients(0.5 * dt, eps);
        Coords e = fields_at(field, state, z);
        for (std::size_t i = 0; i < z.size(); ++i)
            for (std::size_t k = 0; k < z[i].size(); ++k) {
                u[i][k] = half.decay * u[i][k] + half.relax * e[i][k];
                z[i][k] += dt * u[i][k];
            }
        e = fields_at(field, state, z);
        for (std::size_t i = 0; i < z.size(); ++i)
            for (std::size_t k = 0; k < z[i].size(); ++k)
                u[i][k] = half.decay * u[i][k] + half.relax * e[i][k];
        break;
    }
    }
    return with_positions(state, z, &u, state.time() + dt);
}

double support_radius(const MultiSpeciesState& state)
{
    double best = 0.0;
    for (const auto& s : state.species()) {
        for (std::size_t k = 0; k < s.size(); ++k) {
            double r2 = 0.0;
            for (double x : s.position(k))
                r2 += x * x;
            if (s.has_velocities())
                for (double v : s.velocity(k))
                    r2 += v * v;
            best = std::max(best, std::sqrt(r2));
        }
    }
    return best;
}

void write_snapshot_csv(std::ostream& out, const MultiSpeciesState& state)
{
    const std::size_t d = state.dim();
    std::string line = "species,index,weight";
    for (std::size_t c = 0; c < d; ++c)
        line += fmt::format(",x{}", c);
    if (state.has_velocities())
        for (std::size_t c = 0; c < d; ++c)
            line += fmt::format(",v{}", c);
    out << line << '\n';
    fmt::memory_buffer buf;
    for (std::size_t i = 0; i < state.species_count(); ++i) {
        const auto& s = state[i];
        for (std::size_t k = 0; k < s.size(); ++k) {
            buf.clear();
            fmt::format_to(std::back_inserter(buf), "{},{},{:.17g}", i, k, s.weight(k));
            for (double x : s.position(k))
                fmt::format_to(std::back_inserter(buf), ",{:.17g}", x);
            if (s.has_velocities())
                for (double v : s.velocity(k))
                    fmt::format_to(std::back_inserter(buf), ",{:.17g}", v);
            buf.push_back('\n');
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        }
    }
}

void write_snapshot_csv(const std::string& path, const MultiSpeciesState& state)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::IoFailure, "cannot open " + path + " for writing");
    write_snapshot_csv(out, state);
    if (!out)
        throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

MultiSpeciesState read_snapshot_csv(std::istream& in, double time)
{
    std::string header;
    if (!std::getline(in, header))
        throw Error(ErrorKind::IoFailure, "snapshot is empty");
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string c;
        while (std::getline(ss, c, ','))
            cols.push_back(c);
    }
    if (cols.size() < 4 || cols[0] != "species" || cols[1] != "index" || cols[2] != "weight")
        throw Error(ErrorKind::IoFailure, "snapshot header must start with species,index,weight");
    std::size_t nx = 0, nv = 0;
    for (std::size_t c = 3; c < cols.size(); ++c) {
        if (cols[c] == fmt::format("x{}", nx))
            ++nx;
        else if (cols[c] == fmt::format("v{}", nv))
            ++nv;
        else
            throw Error(ErrorKind::IoFailure, "unexpected snapshot column '" + cols[c] + "'");
    }
    if (nx == 0 || (nv != 0 && nv != nx))
        throw Error(ErrorKind::IoFailure, "snapshot coordinate columns are inconsistent");

    struct Acc {
        std::vector<double> x, v, w;
    };
    std::vector<Acc> acc;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ','))
            f.push_back(c);
        if (f.size() != cols.size())
            throw Error(ErrorKind::IoFailure, fmt::format("snapshot line {} has {} fields", lineno, f.size()));
        try {
            std::size_t sp = std::stoul(f[0]);
            if (sp >= acc.size())
                acc.resize(sp + 1);
            acc[sp].w.push_back(std::stod(f[2]));
            for (std::size_t k = 0; k < nx; ++k)
                acc[sp].x.push_back(std::stod(f[3 + k]));
            for (std::size_t k = 0; k < nv; ++k)
                acc[sp].v.push_back(std::stod(f[3 + nx + k]));
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::IoFailure, fmt::format("snapshot line {} is not numeric", lineno));
        }
    }
    std::vector<SpeciesEnsemble> species;
    for (auto& a : acc) {
        std::optional<std::vector<double>> v;
        if (nv)
            v = std::move(a.v);
        species.emplace_back(nx, std::move(a.x), std::move(a.w), std::move(v));
    }
    return MultiSpeciesState(time, std::move(species));
}

MultiSpeciesState read_snapshot_csv(const std::string& path, double time)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot open " + path);
    return read_snapshot_csv(in, time);
}

} // namespace kinswarm
