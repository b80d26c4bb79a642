// Orchestration: initial data, single runs with manifests, side-by-side
// comparison against a first-order reference, and parameter sweeps.
#ifndef KINSWARM_HARNESS_HPP
#define KINSWARM_HARNESS_HPP

#include "kinswarm/config.hpp"
#include "kinswarm/diagnostics.hpp"
#include "kinswarm/macro.hpp"
#include "kinswarm/state.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kinswarm {

std::string_view version() noexcept;

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);
/// SHA-256 of the canonical JSON config document, output_dir excluded.
std::string config_hash(const ExperimentConfig& cfg);

/// Field seen by the particles under the configured field model.
FieldEvaluator particle_field(const ExperimentConfig& cfg);

/// Initial positions of every species (no velocities); identical for any
/// epsilon or delta since the draws depend on the seed and species index only.
MultiSpeciesState sample_positions(const ExperimentConfig& cfg);

/// Positions plus velocities per the species velocity specs. Well-prepared
/// velocities follow the reference: the grid transport velocity for grid_1d,
/// the particle field E_i otherwise.
MultiSpeciesState initial_state(const ExperimentConfig& cfg, ReferenceKind reference = ReferenceKind::MacroParticle);

/// Initial reference density: mollified initial positions with 1/n = 2 dx.
DensityGrid1D initial_density(const ExperimentConfig& cfg, const MultiSpeciesState& positions);

struct ManifestEntry {
    std::string path; // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string config_hash;
    std::string version;
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> files;
    double wall_clock = 0.0;
    std::string status = "ok"; // ok | failed
    std::string error;
    int exit_code = 0;

    nlohmann::ordered_json to_json() const;
    /// Recomputes every checksum under `dir`; false on any mismatch or missing file.
    bool verify(const std::string& dir) const;
};

/// Executes the configured dynamics, writing snapshots, diagnostics,
/// Picard histories (kinetic runs) and manifest.json into cfg.output_dir.
/// Numerical failures are recorded in the manifest (exit_code 3), not thrown.
RunManifest run(const ExperimentConfig& cfg);

struct CompareOptions {
    ReferenceKind reference = ReferenceKind::MacroParticle;
    bool modulated_energy = false;
    std::string output_dir; // empty: no files
};

/// Reference trajectory at the sample times t_k = k T / samples.
struct ReferenceTrajectory {
    ReferenceKind kind = ReferenceKind::MacroParticle;
    std::vector<double> times;
    std::vector<MultiSpeciesState> particles; // analytic and macro_particle
    std::vector<DensityGrid1D> densities;     // grid_1d
};

ReferenceTrajectory compute_reference(const ExperimentConfig& cfg, ReferenceKind kind);

/// Channels: w1 (summed over species), I_i, second_moment_i, support_radius
/// and, with modulated_energy, ek_kinetic, ek_interaction, ek_total.
DiagnosticsSeries compare_to_macro(const ExperimentConfig& cfg, double epsilon, const CompareOptions& options = {});
DiagnosticsSeries compare_to_macro(const ExperimentConfig& cfg, double epsilon, const ReferenceTrajectory& reference,
                                   const CompareOptions& options = {});

/// Least-squares slope of log y against log x.
double fit_power_law(std::span<const double> x, std::span<const double> y);

struct SweepPoint {
    double value = 0.0;
    DiagnosticsSeries series;
    bool failed = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::string table_csv; // param,t,w1,I_1..I_N,E_K
    std::vector<double> final_metric; // w1 averaged over the fit window, per point
    double slope = 0.0;               // NaN when degenerate
    bool degenerate = false;
    bool monotone = false; // final metric strictly decreasing along the value list
    bool partial = false;  // some point failed
};

/// Runs every parameter value against one shared reference. Writes the
/// table, a summary and per-point diagnostics when output_dir is non-empty.
SweepResult sweep(const SweepConfig& cfg, const std::string& output_dir = {});

} // namespace kinswarm

#endif
