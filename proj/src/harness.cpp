#include "kinswarm/harness.hpp"

#include "kinswarm/ensemble.hpp"
#include "kinswarm/error.hpp"
#include "kinswarm/kinetic.hpp"
#include "kinswarm/transport.hpp"

#include <fmt/format.h>
#include <gsl/gsl_cdf.h>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#ifndef KINSWARM_VERSION
#define KINSWARM_VERSION "dev"
#endif

namespace kinswarm {

namespace fs = std::filesystem;

std::string_view version() noexcept { return KINSWARM_VERSION; }

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::IoFailure, "SHA-256 computation failed");
    std::string out;
    out.reserve(2 * len);
    for (unsigned int k = 0; k < len; ++k)
        out += fmt::format("{:02x}", digest[k]);
    return out;
}

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

std::string config_hash(const ExperimentConfig& cfg)
{
    // Where the results land does not change the experiment.
    nlohmann::json doc = cfg.document;
    if (doc.is_object())
        doc.erase("output_dir");
    return sha256_hex(doc.dump());
}

// ---------------------------------------------------------------------------
// Initial data

namespace {

// Inverse CDF of a two-component Gaussian mixture by bisection.
double two_bump_quantile(double u, double a, double b, double s, double f)
{
    auto cdf = [&](double x) {
        return f * gsl_cdf_ugaussian_P((x - a) / s) + (1.0 - f) * gsl_cdf_ugaussian_P((x - b) / s);
    };
    double lo = std::min(a, b) - 40.0 * s, hi = std::max(a, b) + 40.0 * s;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi)
            break;
        (cdf(mid) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> sample_species(const SamplerSpec& s, std::size_t count, std::size_t dim, std::uint64_t seed,
                                   std::size_t species)
{
    std::vector<double> x(count * dim);
    if (s.kind == SamplerKind::Explicit)
        return s.values;
    if (s.quantile) {
        for (std::size_t k = 0; k < count; ++k) {
            const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(count);
            switch (s.kind) {
            case SamplerKind::UniformBox: x[k] = s.lower[0] + u * (s.upper[0] - s.lower[0]); break;
            case SamplerKind::UniformBall: x[k] = s.center[0] + s.radius * (2.0 * u - 1.0); break;
            case SamplerKind::Gaussian: x[k] = s.center[0] + s.std_dev * gsl_cdf_ugaussian_Pinv(u); break;
            case SamplerKind::TwoBump:
                x[k] = two_bump_quantile(u, s.center[0], s.center_b[0], s.std_dev, s.fraction);
                break;
            case SamplerKind::Explicit: break;
            }
        }
        return x;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(species)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < count; ++k) {
        double* p = x.data() + k * dim;
        switch (s.kind) {
        case SamplerKind::UniformBox:
            for (std::size_t c = 0; c < dim; ++c)
                p[c] = s.lower[c] + unif(rng) * (s.upper[c] - s.lower[c]);
            break;
        case SamplerKind::UniformBall: {
            double norm = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                p[c] = normal(rng);
                norm += p[c] * p[c];
            }
            norm = std::sqrt(norm);
            const double r = s.radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim));
            for (std::size_t c = 0; c < dim; ++c)
                p[c] = s.center[c] + (norm > 0.0 ? r * p[c] / norm : 0.0);
            break;
        }
        case SamplerKind::Gaussian:
            for (std::size_t c = 0; c < dim; ++c)
                p[c] = s.center[c] + s.std_dev * normal(rng);
            break;
        case SamplerKind::TwoBump: {
            const auto& mean = unif(rng) < s.fraction ? s.center : s.center_b;
            for (std::size_t c = 0; c < dim; ++c)
                p[c] = mean[c] + s.std_dev * normal(rng);
            break;
        }
        case SamplerKind::Explicit: break;
        }
    }
    return x;
}

VelocitySpec resolve(const VelocitySpec& v, ReferenceKind reference)
{
    if (v.kind != VelocityKind::WellPrepared)
        return v;
    return {reference == ReferenceKind::Grid1D ? VelocityKind::GridField : VelocityKind::ParticleField, {}};
}

// Transport velocity -sum_j grad K_ij * rho_j sampled at the cell centers.
VelocityFieldSample transport_velocity(const DensityGrid1D& rho, const KernelMatrix& kernels)
{
    VelocityFieldSample u = velocity_on_grid(rho, kernels);
    for (auto& row : u.values)
        for (double& v : row)
            v = -v;
    return u;
}

} // namespace

FieldEvaluator particle_field(const ExperimentConfig& cfg)
{
    if (cfg.field == FieldModel::Grid) {
        const GridSpec& g = *cfg.grid;
        return grid_particle_field(cfg.kernel_matrix(), g.x_min, g.dx(), g.cells);
    }
    return [kernels = cfg.particle_kernels()](const MultiSpeciesState& s) { return particle_fields(kernels, s); };
}

MultiSpeciesState sample_positions(const ExperimentConfig& cfg)
{
    std::vector<SpeciesEnsemble> species;
    for (std::size_t i = 0; i < cfg.species.size(); ++i) {
        const auto& s = cfg.species[i];
        species.push_back(SpeciesEnsemble::with_equal_weights(
            cfg.dim, sample_species(s.sampler, s.count, cfg.dim, cfg.seed, i)));
    }
    return MultiSpeciesState(0.0, std::move(species));
}

DensityGrid1D initial_density(const ExperimentConfig& cfg, const MultiSpeciesState& positions)
{
    if (!cfg.grid)
        throw Error(ErrorKind::ConfigInvalid, "grid: a [grid] table is required here");
    const GridSpec& g = *cfg.grid;
    return DensityGrid1D::from_particles(positions.positions_only(), g.x_min, g.dx(), g.cells,
                                         grid_mollifier_index(g.dx()));
}

MultiSpeciesState initial_state(const ExperimentConfig& cfg, ReferenceKind reference)
{
    MultiSpeciesState pos = sample_positions(cfg);
    bool any = false;
    for (const auto& s : cfg.species)
        any = any || s.velocity.kind != VelocityKind::None;
    if (!any)
        return pos;

    std::optional<std::vector<std::vector<double>>> particle;
    std::optional<VelocityFieldSample> grid_u;
    std::vector<SpeciesEnsemble> out;
    for (std::size_t i = 0; i < cfg.species.size(); ++i) {
        const VelocitySpec v = resolve(cfg.species[i].velocity, reference);
        const SpeciesEnsemble& s = pos[i];
        std::vector<double> vel(s.positions().size(), 0.0);
        switch (v.kind) {
        case VelocityKind::None:
        case VelocityKind::Zero:
        case VelocityKind::WellPrepared: break;
        case VelocityKind::Constant:
            for (std::size_t k = 0; k < s.size(); ++k)
                for (std::size_t c = 0; c < cfg.dim; ++c)
                    vel[k * cfg.dim + c] = v.values[c];
            break;
        case VelocityKind::Explicit: vel = v.values; break;
        case VelocityKind::ParticleField:
            if (!particle)
                particle = particle_field(cfg)(pos);
            vel = (*particle)[i];
            break;
        case VelocityKind::GridField:
            if (!grid_u)
                grid_u = transport_velocity(initial_density(cfg, pos), cfg.kernel_matrix());
            for (std::size_t k = 0; k < s.size(); ++k)
                vel[k] = grid_u->interpolate(i, s.positions()[k]);
            break;
        }
        out.push_back(s.with_coordinates(s.positions(), std::move(vel)));
    }
    return MultiSpeciesState(0.0, std::move(out));
}

// ---------------------------------------------------------------------------
// Stepping helpers

namespace {

std::vector<double> sample_times(double horizon, std::size_t samples)
{
    std::vector<double> t{0.0};
    if (horizon == 0.0)
        return t;
    for (std::size_t s = 1; s <= samples; ++s)
        t.push_back(horizon * static_cast<double>(s) / static_cast<double>(samples));
    return t;
}

std::size_t step_count(double interval, double dt)
{
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(interval / dt - 1e-9)));
}

struct Advance {
    MultiSpeciesState state;
    std::vector<PicardWindow> windows;
};

// Moves `state` from t0 to t1 under the configured dynamics.
Advance advance(const ExperimentConfig& cfg, const KernelMatrix& kernels, const FieldEvaluator& field,
                MultiSpeciesState state, double t1)
{
    const double t0 = state.time();
    const double interval = t1 - t0;
    Advance out;
    if (cfg.dynamics == Dynamics::KineticPicard) {
        PicardConfig pc;
        pc.tol = cfg.picard_tol;
        pc.max_iter = cfg.picard_max_iter;
        pc.dt = cfg.integrator.dt;
        pc.horizon = interval;
        pc.window = cfg.picard_window;
        pc.samples = cfg.picard_samples;
        pc.metric = cfg.metric;
        // Iterates live in phase space, where the 1-D metric does not apply.
        if (pc.metric.method == W1Method::OneD)
            pc.metric.method = W1Method::Exact;
        PicardResult r = picard_solve(state.with_time(0.0), kernels, cfg.integrator.epsilon, pc);
        for (auto& w : r.windows) {
            w.t0 += t0;
            w.t1 += t0;
        }
        out.state = r.trajectory.back().with_time(t1);
        out.windows = std::move(r.windows);
        return out;
    }
    const std::size_t steps = step_count(interval, cfg.integrator.dt);
    IntegratorConfig ic = cfg.integrator;
    ic.dt = interval / static_cast<double>(steps);
    for (std::size_t n = 0; n < steps; ++n)
        state = cfg.dynamics == Dynamics::FirstOrder ? step_first_order(state, field, ic)
                                                     : step_second_order(state, field, ic);
    out.state = state.with_time(t1);
    return out;
}

// Grid solve over one sample interval; the step follows the CFL bound at the
// interval start with a factor-two margin and is halved on violation.
DensityGrid1D advance_grid(const DensityGrid1D& rho, const KernelMatrix& kernels, double t1, double fixed_dt)
{
    const double interval = t1 - rho.time;
    double h = fixed_dt;
    if (!(h > 0.0)) {
        const VelocityFieldSample u = velocity_on_grid(rho, kernels);
        double umax = 0.0;
        for (const auto& row : u.values)
            for (double v : row)
                umax = std::max(umax, std::abs(v));
        h = umax > 0.0 ? 0.25 * rho.dx / umax : interval;
    }
    for (int attempt = 0;; ++attempt) {
        try {
            DensityGrid1D out = grid_solve_1d(rho, kernels, interval, std::min(h, interval)).back();
            out.time = t1;
            return out;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::CFLViolation || fixed_dt > 0.0 || attempt >= 6)
                throw;
            h *= 0.5;
        }
    }
}

EmpiricalMeasure grid_measure(const DensityGrid1D& rho, std::size_t species)
{
    std::vector<double> points, weights;
    double total = 0.0;
    for (std::size_t c = 0; c < rho.cells; ++c) {
        const double m = rho.values[species][c] * rho.dx;
        if (m > 0.0) {
            points.push_back(rho.center(c));
            weights.push_back(m);
            total += m;
        }
    }
    for (double& w : weights)
        w /= total;
    return EmpiricalMeasure(1, std::move(points), std::move(weights));
}

struct FileWriter {
    fs::path root;
    std::vector<ManifestEntry> entries;

    void write(const std::string& rel, const std::string& content)
    {
        const fs::path p = root / rel;
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorKind::IoFailure, "cannot write " + p.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw Error(ErrorKind::IoFailure, "short write to " + p.string());
        entries.push_back({rel, sha256_hex(content), content.size()});
    }
};

void prepare_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw Error(ErrorKind::IoFailure, "cannot create output directory " + dir);
}

std::string picard_csv(const PicardWindow& w)
{
    std::string out = "iter,sup_w1\n";
    for (std::size_t k = 0; k < w.distances.size(); ++k)
        out += fmt::format("{},{:.17g}\n", k + 1, w.distances[k]);
    return out;
}

void write_manifest(const std::string& dir, const RunManifest& m)
{
    const std::string text = m.to_json().dump(2) + "\n";
    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::IoFailure, "cannot write manifest in " + dir);
    out << text;
}

std::string snapshot_text(const MultiSpeciesState& s)
{
    std::ostringstream ss;
    write_snapshot_csv(ss, s);
    return ss.str();
}

} // namespace

nlohmann::ordered_json RunManifest::to_json() const
{
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["version"] = version;
    j["seed"] = seed;
    j["status"] = status;
    j["exit_code"] = exit_code;
    if (!error.empty())
        j["error"] = error;
    j["wall_clock_seconds"] = wall_clock;
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& f : files)
        j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    return j;
}

bool RunManifest::verify(const std::string& dir) const
{
    for (const auto& f : files) {
        const fs::path p = fs::path(dir) / f.path;
        std::error_code ec;
        if (!fs::is_regular_file(p, ec))
            return false;
        const std::string content = read_file(p.string());
        if (content.size() != f.bytes || sha256_hex(content) != f.sha256)
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// run

RunManifest run(const ExperimentConfig& cfg)
{
    const auto start = std::chrono::steady_clock::now();
    prepare_dir(cfg.output_dir);
    FileWriter files{cfg.output_dir, {}};
    RunManifest manifest;
    manifest.config_hash = config_hash(cfg);
    manifest.version = std::string(version());
    manifest.seed = cfg.seed;

    files.write("config.json", cfg.document.dump(2) + "\n");
    const std::size_t ns = cfg.species.size();
    std::vector<std::string> channels = cfg.channels;
    if (channels.empty()) {
        channels = {"second_moment", "support_radius"};
        if (cfg.dynamics != Dynamics::FirstOrder)
            channels.insert(channels.begin(), "alignment");
    }

    DiagnosticsSeries series;
    for (const auto& ch : channels) {
        if (ch == "alignment")
            for (std::size_t i = 0; i < ns; ++i)
                series.declare(fmt::format("I_{}", i + 1), "length/time");
        else if (ch == "free_energy")
            series.declare("free_energy", "energy");
        else if (ch == "second_moment")
            for (std::size_t i = 0; i < ns; ++i)
                series.declare(fmt::format("second_moment_{}", i + 1), "length^2");
        else if (ch == "support_radius")
            series.declare("support_radius", "length");
        else if (ch == "linf_density")
            for (std::size_t i = 0; i < ns; ++i)
                series.declare(fmt::format("linf_density_{}", i + 1), "1/length");
    }

    std::vector<std::string> snapshot_index;
    std::size_t picard_count = 0;
    try {
        const KernelMatrix kernels = cfg.particle_kernels();
        const FieldEvaluator field = particle_field(cfg);
        MultiSpeciesState state = initial_state(cfg, ReferenceKind::MacroParticle);
        if (cfg.dynamics != Dynamics::FirstOrder && !state.has_velocities())
            throw Error(ErrorKind::MissingVelocities, "second-order runs need initial velocities");
        const std::vector<double> times = sample_times(cfg.horizon, cfg.samples);

        auto record = [&](std::size_t row) {
            std::map<std::string, double> values;
            for (const auto& ch : channels) {
                if (ch == "alignment") {
                    auto a = velocity_alignment(state, field(state.positions_only()));
                    for (std::size_t i = 0; i < ns; ++i)
                        values[fmt::format("I_{}", i + 1)] = a[i];
                } else if (ch == "free_energy") {
                    values["free_energy"] = free_energy(state.positions_only(), kernels);
                } else if (ch == "second_moment") {
                    auto m = second_moment_energy(state);
                    for (std::size_t i = 0; i < ns; ++i)
                        values[fmt::format("second_moment_{}", i + 1)] = m[i];
                } else if (ch == "support_radius") {
                    values["support_radius"] = support_radius(state);
                } else if (ch == "linf_density") {
                    DensityGrid1D rho = initial_density(cfg, state);
                    for (std::size_t i = 0; i < ns; ++i)
                        values[fmt::format("linf_density_{}", i + 1)] =
                            lp_norm(rho, i, std::numeric_limits<double>::infinity());
                }
            }
            series.append(state.time(), values);
            const bool last = row + 1 == times.size();
            if (cfg.write_snapshots && (row % cfg.snapshot_every == 0 || last)) {
                const std::string rel = fmt::format("snapshots/snap_{:06d}.csv", row);
                files.write(rel, snapshot_text(state));
                snapshot_index.push_back(fmt::format("{},{:.17g},{}", row, state.time(), rel));
            }
        };

        record(0);
        for (std::size_t row = 1; row < times.size(); ++row) {
            Advance a = advance(cfg, kernels, field, state, times[row]);
            state = std::move(a.state);
            for (const auto& w : a.windows)
                files.write(fmt::format("picard/window_{:04d}.csv", picard_count++), picard_csv(w));
            record(row);
        }
    } catch (const Error& e) {
        if (!e.is_numerical())
            throw;
        manifest.status = "failed";
        manifest.error = e.what();
        manifest.exit_code = 3;
    }

    files.write("diagnostics.csv", series.to_csv());
    files.write("diagnostics.json", series.sidecar_json(manifest.config_hash));
    if (!snapshot_index.empty()) {
        std::string index = "row,t,path\n";
        for (const auto& line : snapshot_index)
            index += line + "\n";
        files.write("snapshots/index.csv", index);
    }
    manifest.files = std::move(files.entries);
    manifest.wall_clock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(cfg.output_dir, manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// compare_to_macro

ReferenceTrajectory compute_reference(const ExperimentConfig& cfg, ReferenceKind kind)
{
    ReferenceTrajectory ref;
    ref.kind = kind;
    ref.times = sample_times(cfg.horizon, cfg.samples);
    const MultiSpeciesState pos = sample_positions(cfg);
    const KernelMatrix kernels = cfg.kernel_matrix();
    switch (kind) {
    case ReferenceKind::Analytic:
        if (!kernels.is_zero())
            throw Error(ErrorKind::ConfigInvalid, "sweep.reference: analytic reference needs zero kernels");
        for (double t : ref.times)
            ref.particles.push_back(pos.with_time(t));
        break;
    case ReferenceKind::MacroParticle: {
        const double dt = cfg.reference_dt > 0.0 ? cfg.reference_dt : cfg.integrator.dt;
        MultiSpeciesState s = pos;
        ref.particles.push_back(s);
        for (std::size_t k = 1; k < ref.times.size(); ++k) {
            s = macro_particle_solve(s, kernels, ref.times[k] - ref.times[k - 1], dt, cfg.reference_scheme)
                    .back()
                    .with_time(ref.times[k]);
            ref.particles.push_back(s);
        }
        break;
    }
    case ReferenceKind::Grid1D: {
        DensityGrid1D rho = initial_density(cfg, pos);
        const double fixed = cfg.grid->dt;
        ref.densities.push_back(rho);
        for (std::size_t k = 1; k < ref.times.size(); ++k) {
            rho = advance_grid(rho, kernels, ref.times[k], fixed);
            ref.densities.push_back(rho);
        }
        break;
    }
    }
    return ref;
}

DiagnosticsSeries compare_to_macro(const ExperimentConfig& cfg, double epsilon, const CompareOptions& options)
{
    return compare_to_macro(cfg, epsilon, compute_reference(cfg, options.reference), options);
}

DiagnosticsSeries compare_to_macro(const ExperimentConfig& base, double epsilon, const ReferenceTrajectory& ref,
                                   const CompareOptions& options)
{
    if (base.dynamics == Dynamics::FirstOrder)
        throw Error(ErrorKind::ConfigInvalid, "dynamics.kind: comparison needs second-order or kinetic dynamics");
    if (!(epsilon > 0.0))
        throw Error(ErrorKind::InvalidState, "epsilon must be positive");
    if (options.modulated_energy && !base.grid)
        throw Error(ErrorKind::ConfigInvalid, "grid: modulated energy needs a [grid] table");
    ExperimentConfig cfg = base;
    cfg.integrator.epsilon = epsilon;
    const std::size_t ns = cfg.species.size();
    const KernelMatrix kernels = cfg.particle_kernels();
    const KernelMatrix raw = cfg.kernel_matrix();
    const FieldEvaluator field = particle_field(cfg);

    DiagnosticsSeries series;
    series.declare("w1", "length");
    for (std::size_t i = 0; i < ns; ++i)
        series.declare(fmt::format("I_{}", i + 1), "length/time");
    for (std::size_t i = 0; i < ns; ++i)
        series.declare(fmt::format("second_moment_{}", i + 1), "length^2");
    series.declare("support_radius", "length");
    if (options.modulated_energy) {
        series.declare("ek_kinetic", "energy");
        series.declare("ek_interaction", "energy");
        series.declare("ek_total", "energy");
    }

    std::vector<GridInteraction> stencils;
    if (options.modulated_energy)
        for (std::size_t i = 0; i < ns; ++i)
            stencils.emplace_back(raw(i, i), cfg.grid->dx(), cfg.grid->cells);

    std::optional<FileWriter> grid_out;
    std::string grid_csv;
    if (!options.output_dir.empty()) {
        prepare_dir(options.output_dir);
        grid_out = FileWriter{options.output_dir, {}};
        grid_csv = "t,cell_index,x_center";
        for (std::size_t i = 0; i < ns; ++i)
            grid_csv += fmt::format(",rho_{}", i + 1);
        for (std::size_t i = 0; i < ns; ++i)
            grid_csv += fmt::format(",u_{}", i + 1);
        grid_csv += "\n";
    }

    MultiSpeciesState state = initial_state(cfg, ref.kind);
    for (std::size_t row = 0; row < ref.times.size(); ++row) {
        if (row > 0)
            state = advance(cfg, kernels, field, state, ref.times[row]).state;
        std::map<std::string, double> values;
        const MultiSpeciesState pos = state.positions_only();

        std::optional<DensityGrid1D> rho;
        if (ref.kind == ReferenceKind::Grid1D)
            rho = ref.densities[row];
        else if (options.modulated_energy || grid_out)
            if (cfg.grid)
                rho = initial_density(cfg, ref.particles[row]);

        double w = 0.0;
        for (std::size_t i = 0; i < ns; ++i) {
            const EmpiricalMeasure mine = EmpiricalMeasure::from_species(pos[i]);
            const EmpiricalMeasure theirs = ref.kind == ReferenceKind::Grid1D
                                                ? grid_measure(*rho, i)
                                                : EmpiricalMeasure::from_species(ref.particles[row][i]);
            w += w1(mine, theirs, cfg.metric);
        }
        values["w1"] = w;
        const auto align = velocity_alignment(state, field(state.positions_only()));
        const auto moments = second_moment_energy(state);
        for (std::size_t i = 0; i < ns; ++i) {
            values[fmt::format("I_{}", i + 1)] = align[i];
            values[fmt::format("second_moment_{}", i + 1)] = moments[i];
        }
        values["support_radius"] = support_radius(state);

        std::optional<VelocityFieldSample> u;
        if (rho)
            u = transport_velocity(*rho, raw);
        if (options.modulated_energy) {
            const ModulatedEnergy e = modulated_energy(state, *rho, *u, epsilon, stencils);
            values["ek_kinetic"] = e.kinetic_part;
            values["ek_interaction"] = e.interaction_part;
            values["ek_total"] = e.total;
        }
        series.append(ref.times[row], values);

        if (grid_out && rho) {
            for (std::size_t c = 0; c < rho->cells; ++c) {
                grid_csv += fmt::format("{:.17g},{},{:.17g}", ref.times[row], c, rho->center(c));
                for (std::size_t i = 0; i < ns; ++i)
                    grid_csv += fmt::format(",{:.17g}", rho->values[i][c]);
                for (std::size_t i = 0; i < ns; ++i)
                    grid_csv += fmt::format(",{:.17g}", u->values[i][c]);
                grid_csv += "\n";
            }
        }
    }

    if (grid_out) {
        const std::string hash = config_hash(cfg);
        grid_out->write("diagnostics.csv", series.to_csv());
        grid_out->write("diagnostics.json", series.sidecar_json(hash));
        if (grid_csv.find('\n') + 1 < grid_csv.size())
            grid_out->write("reference_grid.csv", grid_csv);
    }
    return series;
}

// ---------------------------------------------------------------------------
// sweep

double fit_power_law(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw Error(ErrorKind::InsufficientValues, "a power-law fit needs at least two points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0))
            throw Error(ErrorKind::InvalidState, "power-law fit needs positive data");
        mx += std::log(x[k]);
        my += std::log(y[k]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = std::log(x[k]) - mx;
        sxy += dx * (std::log(y[k]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0)
        throw Error(ErrorKind::InsufficientValues, "power-law fit needs distinct abscissae");
    return sxy / sxx;
}

SweepResult sweep(const SweepConfig& cfg, const std::string& output_dir)
{
    if (cfg.values.size() < 3)
        throw Error(ErrorKind::InsufficientValues,
                    fmt::format("a sweep needs at least 3 values, got {}", cfg.values.size()));
    const auto start = std::chrono::steady_clock::now();
    const std::size_t ns = cfg.base.species.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SweepResult result;

    std::optional<ReferenceTrajectory> reference;
    if (!cfg.synthetic)
        reference = compute_reference(cfg.base, cfg.reference);

    for (std::size_t p = 0; p < cfg.values.size(); ++p) {
        const double value = cfg.values[p];
        SweepPoint point;
        point.value = value;
        if (cfg.synthetic) {
            const double metric = cfg.synthetic->first * std::pow(value, cfg.synthetic->second);
            point.series.declare("w1", "length");
            for (double t : sample_times(cfg.base.horizon, cfg.base.samples))
                point.series.append(t, {{"w1", metric}});
            result.points.push_back(std::move(point));
            continue;
        }
        ExperimentConfig pc = cfg.base;
        if (cfg.parameter == SweepParameter::Epsilon)
            pc.integrator.epsilon = value;
        else
            pc.delta = value;
        CompareOptions opts;
        opts.reference = cfg.reference;
        opts.modulated_energy = cfg.modulated_energy;
        if (!output_dir.empty())
            opts.output_dir = (fs::path(output_dir) / fmt::format("point_{:02d}", p)).string();
        try {
            point.series = compare_to_macro(pc, pc.integrator.epsilon, *reference, opts);
        } catch (const Error& e) {
            if (!e.is_numerical())
                throw;
            point.failed = true;
            point.error = e.what();
            result.partial = true;
        }
        result.points.push_back(std::move(point));
    }

    // Table.
    std::string table = "param,t,w1";
    for (std::size_t i = 0; i < ns; ++i)
        table += fmt::format(",I_{}", i + 1);
    table += ",E_K\n";
    for (const auto& point : result.points) {
        const auto& s = point.series;
        for (std::size_t r = 0; r < s.rows(); ++r) {
            table += fmt::format("{:.17g},{:.17g},{:.17g}", point.value, s.times()[r], s.channel("w1")[r]);
            for (std::size_t i = 0; i < ns; ++i) {
                const std::string name = fmt::format("I_{}", i + 1);
                table += fmt::format(",{:.17g}", s.has(name) ? s.channel(name)[r] : nan);
            }
            table += fmt::format(",{:.17g}\n", s.has("ek_total") ? s.channel("ek_total")[r] : nan);
        }
    }
    result.table_csv = table;

    // Rate fit on the final fit_window samples.
    bool degenerate = result.partial;
    for (const auto& point : result.points) {
        const auto& s = point.series;
        if (s.rows() == 0) {
            result.final_metric.push_back(nan);
            degenerate = true;
            continue;
        }
        const auto& w = s.channel("w1");
        const std::size_t window = std::min(cfg.fit_window, w.size());
        double mean = 0.0;
        for (std::size_t k = w.size() - window; k < w.size(); ++k)
            mean += w[k];
        mean /= static_cast<double>(window);
        result.final_metric.push_back(mean);
        if (!(mean > 0.0) || !std::isfinite(mean))
            degenerate = true;
    }
    if (!degenerate) {
        const auto [lo, hi] = std::minmax_element(result.final_metric.begin(), result.final_metric.end());
        if (*hi - *lo <= 1e-12 * std::abs(*hi))
            degenerate = true;
    }
    result.degenerate = degenerate;
    result.slope = degenerate ? nan : fit_power_law(cfg.values, result.final_metric);
    result.monotone = !result.partial;
    for (std::size_t k = 1; k < result.final_metric.size(); ++k)
        if (!(result.final_metric[k] < result.final_metric[k - 1]))
            result.monotone = false;

    if (!output_dir.empty()) {
        prepare_dir(output_dir);
        FileWriter files{output_dir, {}};
        files.write("config.json", cfg.base.document.dump(2) + "\n");
        files.write("sweep_table.csv", result.table_csv);
        nlohmann::ordered_json summary;
        summary["parameter"] = cfg.parameter == SweepParameter::Epsilon ? "epsilon" : "delta";
        summary["reference"] = std::string(to_string(cfg.reference));
        summary["values"] = cfg.values;
        summary["final_metric"] = nlohmann::ordered_json::array();
        for (double m : result.final_metric)
            summary["final_metric"].push_back(std::isfinite(m) ? nlohmann::ordered_json(m) : nullptr);
        summary["fit_window"] = cfg.fit_window;
        summary["slope"] = std::isfinite(result.slope) ? nlohmann::ordered_json(result.slope) : nullptr;
        summary["degenerate"] = result.degenerate;
        summary["monotone"] = result.monotone;
        summary["partial"] = result.partial;
        summary["failures"] = nlohmann::ordered_json::array();
        for (const auto& point : result.points)
            if (point.failed)
                summary["failures"].push_back({{"value", point.value}, {"error", point.error}});
        files.write("sweep_summary.json", summary.dump(2) + "\n");
        // Per-point files written by compare_to_macro are listed too.
        for (std::size_t p = 0; p < result.points.size(); ++p) {
            const std::string dir = fmt::format("point_{:02d}", p);
            for (const char* name : {"diagnostics.csv", "diagnostics.json", "reference_grid.csv"}) {
                const fs::path path = fs::path(output_dir) / dir / name;
                std::error_code ec;
                if (fs::is_regular_file(path, ec)) {
                    const std::string content = read_file(path.string());
                    files.entries.push_back({dir + "/" + name, sha256_hex(content), content.size()});
                }
            }
        }
        RunManifest manifest;
        manifest.config_hash = config_hash(cfg.base);
        manifest.version = std::string(version());
        manifest.seed = cfg.base.seed;
        manifest.files = std::move(files.entries);
        manifest.status = result.partial ? "failed" : "ok";
        manifest.exit_code = result.partial ? 3 : 0;
        manifest.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(output_dir, manifest);
    }
    return result;
}

} // namespace kinswarm
