// Command-line entry point: simulate, sweep, metrics, validate-config.
#include "kinswarm/config.hpp"
#include "kinswarm/ensemble.hpp"
#include "kinswarm/error.hpp"
#include "kinswarm/harness.hpp"
#include "kinswarm/transport.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <cmath>
#include <iostream>

namespace ks = kinswarm;

namespace {

int exit_code(const ks::Error& e) { return e.is_numerical() ? 3 : 2; }

int simulate(const std::string& path, const std::string& output)
{
    ks::ExperimentConfig cfg = ks::parse_experiment(ks::load_config_document(path));
    if (!output.empty())
        cfg.output_dir = output;
    const ks::RunManifest m = ks::run(cfg);
    fmt::print("{} {} files in {} ({:.3f} s)\n", m.status, m.files.size(), cfg.output_dir, m.wall_clock);
    if (!m.error.empty())
        fmt::print(stderr, "{}\n", m.error);
    return m.exit_code;
}

int run_sweep(const std::string& path, const std::string& output)
{
    const ks::SweepConfig cfg = ks::parse_sweep(ks::load_config_document(path));
    const std::string dir = output.empty() ? cfg.base.output_dir : output;
    const ks::SweepResult r = ks::sweep(cfg, dir);
    for (std::size_t k = 0; k < cfg.values.size(); ++k)
        fmt::print("param {:.17g}  final w1 {:.17g}{}\n", cfg.values[k], r.final_metric[k],
                   r.points[k].failed ? "  FAILED" : "");
    if (r.degenerate)
        fmt::print("slope undefined (degenerate metric)\n");
    else
        fmt::print("log-log slope {:.17g}\n", r.slope);
    fmt::print("monotone {}\n", r.monotone ? "yes" : "no");
    return r.partial ? 3 : 0;
}

int metrics(const std::string& a, const std::string& b, const std::string& method, std::size_t directions,
            std::uint64_t seed, bool phase)
{
    const ks::MultiSpeciesState sa = ks::read_snapshot_csv(a), sb = ks::read_snapshot_csv(b);
    if (sa.species_count() != sb.species_count())
        throw ks::Error(ks::ErrorKind::SpeciesCountMismatch, "snapshots hold different species counts");
    ks::W1Options opts;
    opts.method = ks::parse_w1_method(method);
    opts.directions = directions;
    opts.seed = seed;
    double total = 0.0;
    for (std::size_t i = 0; i < sa.species_count(); ++i) {
        const double d = ks::w1(ks::EmpiricalMeasure::from_species(sa[i], phase),
                                ks::EmpiricalMeasure::from_species(sb[i], phase), opts);
        fmt::print("species {} {:.17g}\n", i + 1, d);
        total += d;
    }
    fmt::print("total {:.17g}\n", total);
    return 0;
}

int validate(const std::string& path)
{
    const nlohmann::json doc = ks::load_config_document(path);
    if (doc.contains("sweep")) {
        const ks::SweepConfig cfg = ks::parse_sweep(doc);
        fmt::print("valid sweep config, {} values, hash {}\n", cfg.values.size(), ks::config_hash(cfg.base));
    } else {
        const ks::ExperimentConfig cfg = ks::parse_experiment(doc);
        fmt::print("valid experiment config, {} species, hash {}\n", cfg.species.size(), ks::config_hash(cfg));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"kinswarm: multi-species swarming simulations and small-inertia limits"};
    app.set_version_flag("--version", std::string(ks::version()));
    app.require_subcommand(1);

    std::string config, output;
    auto* sim = app.add_subcommand("simulate", "run one experiment");
    sim->add_option("config", config, "experiment config (TOML or JSON)")->required();
    sim->add_option("-o,--output", output, "output directory (overrides the config)");

    auto* sw = app.add_subcommand("sweep", "run an epsilon or delta sweep");
    sw->add_option("config", config, "sweep config (TOML or JSON)")->required();
    sw->add_option("-o,--output", output, "output directory (overrides the config)");

    std::string snap_a, snap_b, method = "exact";
    std::size_t directions = 64;
    std::uint64_t seed = 0;
    bool phase = false;
    auto* met = app.add_subcommand("metrics", "W1 between two snapshot files, per species");
    met->add_option("snapshot_a", snap_a)->required();
    met->add_option("snapshot_b", snap_b)->required();
    met->add_option("--method", method, "exact | 1d | sliced")->check(CLI::IsMember({"exact", "1d", "sliced"}));
    met->add_option("--L", directions, "number of sliced directions")->check(CLI::PositiveNumber);
    met->add_option("--seed", seed, "seed for sliced directions");
    met->add_flag("--phase-space", phase, "compare (x, v) instead of positions");

    auto* val = app.add_subcommand("validate-config", "parse and validate a config file");
    val->add_option("config", config)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*sim)
            return simulate(config, output);
        if (*sw)
            return run_sweep(config, output);
        if (*met)
            return metrics(snap_a, snap_b, method, directions, seed, phase);
        if (*val)
            return validate(config);
    } catch (const ks::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 3;
    }
    return 0;
}
