// Experiment and sweep configuration: a TOML-subset reader (JSON accepted
// too) and the validated structures the harness consumes.

#ifndef KINSWARM_CONFIG_HPP
#define KINSWARM_CONFIG_HPP

#include "kinswarm/ensemble.hpp"
#include "kinswarm/kernels.hpp"
#include "kinswarm/transport.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kinswarm {

/// Parses the TOML subset described in docs/config-grammar.md.
nlohmann::json parse_toml(std::string_view text);

/// Reads a config file; `.json` files are parsed as JSON, anything else as TOML.
nlohmann::json load_config_document(const std::string& path);

enum class SamplerKind { UniformBox, UniformBall, Gaussian, TwoBump, Explicit };

struct SamplerSpec {
    SamplerKind kind = SamplerKind::UniformBox;
    bool quantile = true; // deterministic quantiles (d = 1) instead of seeded draws
    std::vector<double> lower, upper;   // uniform box
    std::vector<double> center;         // ball, gaussian mean, first bump
    std::vector<double> center_b;       // second bump
    double radius = 1.0;                // ball
    double std_dev = 1.0;               // gaussian, bumps
    double fraction = 0.5;              // mass of the first bump
    std::vector<double> values;         // explicit positions
};

enum class VelocityKind { None, Zero, Constant, Explicit, ParticleField, GridField, WellPrepared };

struct VelocitySpec {
    VelocityKind kind = VelocityKind::Zero;
    std::vector<double> values;
};

struct SpeciesSpec {
    std::size_t count = 0;
    SamplerSpec sampler;
    VelocitySpec velocity;
};

enum class Dynamics { FirstOrder, SecondOrder, KineticPicard };

/// How particles see the interaction field: direct pair sums, or the
/// mollified grid density (particle-in-cell, d = 1, needs [grid]).
enum class FieldModel { Direct, Grid };

std::string_view to_string(Dynamics dynamics) noexcept;

struct GridSpec {
    double x_min = -2.0;
    double x_max = 2.0;
    std::size_t cells = 512;
    double dt = 0.0; // 0 picks the largest CFL-safe multiple of the sample spacing

    double dx() const { return (x_max - x_min) / static_cast<double>(cells); }
};

enum class ReferenceKind { Analytic, MacroParticle, Grid1D };

std::string_view to_string(ReferenceKind kind) noexcept;

struct ExperimentConfig {
    std::string name = "run";
    std::size_t dim = 1;
    std::uint64_t seed = 0;
    double horizon = 1.0;
    std::vector<SpeciesSpec> species;
    std::vector<KernelSpec> kernels; // row-major N x N
    double delta = 0.0;              // regularization of singular diagonals, 0 = none
    Dynamics dynamics = Dynamics::SecondOrder;
    FieldModel field = FieldModel::Direct;
    IntegratorConfig integrator{Scheme::ExpEuler, 1e-3, 1.0};
    double reference_dt = 0.0;        // 0 reuses integrator.dt
    Scheme reference_scheme = Scheme::Rk4;
    // Picard
    double picard_tol = 1e-8;
    std::size_t picard_max_iter = 50;
    double picard_window = 0.0;
    std::size_t picard_samples = 32;
    // Diagnostics and output
    std::vector<std::string> channels;
    std::size_t samples = 20; // diagnostic rows over the horizon
    std::size_t snapshot_every = 1; // snapshot every k-th diagnostic row
    bool write_snapshots = true;
    std::optional<GridSpec> grid;
    W1Options metric{W1Method::OneD, 64, 0, kDefaultW1SizeCap};
    std::string output_dir = "out";

    /// Canonical JSON used for the config hash.
    nlohmann::json document;

    KernelMatrix kernel_matrix() const;
    /// Kernels used by particle dynamics: singular diagonals regularized by delta.
    KernelMatrix particle_kernels() const;
    std::size_t species_count() const { return species.size(); }
};

enum class SweepParameter { Epsilon, Delta };

struct SweepConfig {
    ExperimentConfig base;
    SweepParameter parameter = SweepParameter::Epsilon;
    std::vector<double> values;
    ReferenceKind reference = ReferenceKind::MacroParticle;
    bool modulated_energy = false;
    std::size_t fit_window = 1;
    std::optional<std::pair<double, double>> synthetic; // (coefficient, exponent)
};

ExperimentConfig parse_experiment(const nlohmann::json& doc);
SweepConfig parse_sweep(const nlohmann::json& doc);

KernelSpec parse_kernel(const nlohmann::json& j, const std::string& path);
nlohmann::json kernel_to_json(const KernelSpec& spec);

} // namespace kinswarm

#endif
