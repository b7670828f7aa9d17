#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <CLI11.hpp>

#include "vvc/errors.hpp"
#include "vvc/pipeline.hpp"
#include "vvc/synth.hpp"

namespace fs = std::filesystem;
using namespace vvc;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> epsilon;
    std::string strategies;
    std::string out;
    std::string x_file;
    bool svg = false;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) items.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) items.push_back(cur);
    return items;
}

RunConfig resolve(const Common& c) {
    if (c.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_run_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.epsilon) cfg.epsilon = {*c.epsilon};
    if (!c.strategies.empty()) cfg.strategies = split_list(c.strategies);
    if (!c.out.empty()) cfg.output_dir = c.out;
    if (!c.x_file.empty()) cfg.x_file = c.x_file;
    cfg.validate();
    return cfg;
}

SensitivityModel reduced_model(const RunConfig& cfg, const Feeder& feeder) {
    return reduce_to_der_nodes(full_sensitivity(cfg, feeder), feeder.aggregated);
}

std::vector<DayDesign> run_designs(const RunConfig& cfg, const Feeder& feeder, const fs::path& dir,
                                   std::optional<int> block) {
    const auto reduced = reduced_model(cfg, feeder);
    std::vector<DayDesign> designs;
    for (double eps : cfg.epsilon) {
        auto day = design_day(cfg, feeder, reduced, eps, block);
        write_day_design(dir, day);
        int unconverged = 0;
        for (const auto& b : day.blocks) unconverged += b.solution.converged ? 0 : 1;
        fmt::print("epsilon {:g}: {} block(s) designed, {} stopped at the iteration limit\n", eps, day.blocks.size(),
                   unconverged);
        designs.push_back(std::move(day));
    }
    return designs;
}

int report_outcomes(const std::vector<SimulationOutcome>& outcomes) {
    int code = 0;
    for (const auto& o : outcomes) {
        if (o.metrics) {
            fmt::print("{:<14} violations {:6.3f}%  reactive {:9.2f} kvarh  lost {:9.2f} kWh  trips {}\n", o.label,
                       100.0 * o.metrics->violation_fraction, o.metrics->reactive_kvarh, o.metrics->lost_kwh(),
                       o.metrics->trips);
        } else {
            fmt::print(stderr, "{:<14} failed: {}\n", o.label, o.error);
            if (code == 0) code = o.exit_code;
        }
    }
    return code;
}

std::vector<SimulationJob> baseline_jobs(const RunConfig& cfg) {
    std::vector<SimulationJob> jobs;
    for (const auto& name : cfg.strategies) {
        const auto s = parse_strategy(name);
        if (s != Strategy::OGD) jobs.push_back({strategy_name(s), s, {}});
    }
    return jobs;
}

bool wants_ogd(const RunConfig& cfg) {
    for (const auto& name : cfg.strategies) {
        if (parse_strategy(name) == Strategy::OGD) return true;
    }
    return false;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gain design and closed-loop simulation for incremental Volt/Var control"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub, bool seed, bool eps, bool strategies, bool svg) {
        sub->add_option("--config", c.config, "run configuration (JSON)")->required();
        sub->add_option("--out", c.out, "output directory (overrides output_dir)");
        sub->add_option("--x-file", c.x_file, "sensitivity matrix CSV used instead of LinDistFlow");
        if (seed) sub->add_option("--seed", c.seed, "scenario seed (overrides design.seed)");
        if (eps) sub->add_option("--epsilon", c.epsilon, "voltage violation probability (overrides design.epsilon)");
        if (strategies) sub->add_option("--strategies", c.strategies, "comma-separated list: ogd,voltvar,onoff");
        if (svg) sub->add_flag("--svg", c.svg, "also write SVG plots");
    };

    auto* build_x = app.add_subcommand("build-x", "build the sensitivity matrix and report its eigenvalues");
    add_common(build_x, false, false, false, false);

    std::optional<int> block;
    auto* design = app.add_subcommand("design-gains", "design one (eta, alpha) pair per horizon block");
    add_common(design, true, true, false, false);
    design->add_option("--block", block, "design only this block (0-based)");

    std::vector<std::string> gains_files;
    auto* simulate = app.add_subcommand("simulate", "run the closed-loop simulation for each strategy");
    add_common(simulate, false, false, true, true);
    simulate->add_option("--gains", gains_files, "gains schedule JSON for the ogd strategy (repeatable)");

    std::vector<std::string> traces, labels;
    double nu_min = 0.95, nu_max = 1.05, base_kva = 100.0;
    std::string analyze_out = "analysis";
    auto* analyze = app.add_subcommand("analyze", "merge trace files into comparison tables");
    analyze->add_option("traces", traces, "trace CSV files")->required();
    analyze->add_option("--labels", labels, "one label per trace")->delimiter(',');
    analyze->add_option("--nu-min", nu_min, "lower voltage limit (p.u.)");
    analyze->add_option("--nu-max", nu_max, "upper voltage limit (p.u.)");
    analyze->add_option("--base-kva", base_kva, "power base for energies");
    analyze->add_option("--out", analyze_out, "output directory");
    analyze->add_flag("--svg", c.svg, "also write SVG plots");

    auto* day_run = app.add_subcommand("day-run", "build X, design gains and simulate every strategy");
    add_common(day_run, true, true, true, true);

    std::string feeder_name = "feeder8";
    std::string synth_out;
    std::uint64_t synth_seed = 42;
    auto* synth = app.add_subcommand("synth", "write a synthetic feeder with its forecast");
    synth->add_option("--feeder", feeder_name, "feeder8 or feeder42");
    synth->add_option("--seed", synth_seed, "layout seed for feeder42");
    synth->add_option("--out", synth_out, "output directory")->required();

    auto* show = app.add_subcommand("show-config", "print the resolved configuration with all defaults");
    show->add_option("--config", c.config, "run configuration (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*show) {
            std::cout << run_config_json(load_run_config(c.config)) << '\n';
            return 0;
        }
        if (*synth) {
            SyntheticFeeder f;
            if (feeder_name == "feeder8") {
                f = make_feeder8();
            } else if (feeder_name == "feeder42") {
                f = make_feeder42(synth_seed);
            } else {
                throw ConfigError(fmt::format("unknown feeder '{}'", feeder_name));
            }
            write_feeder(synth_out, f);
            fmt::print("wrote {} into {}\n", f.name, synth_out);
            return 0;
        }
        if (*analyze) {
            if (labels.empty()) {
                for (const auto& t : traces) labels.push_back(fs::path(t).parent_path().filename().string());
            }
            std::vector<fs::path> paths(traces.begin(), traces.end());
            analyze_traces(paths, labels, nu_min, nu_max, base_kva, analyze_out, c.svg);
            fmt::print("analysis written to {}\n", analyze_out);
            return 0;
        }

        if (*build_x) {
            RunConfig cfg = load_run_config(c.config);
            if (!c.out.empty()) cfg.output_dir = c.out;
            if (!c.x_file.empty()) cfg.x_file = c.x_file;
            cfg.validate();
            const auto r = build_x_outputs(cfg, cfg.output_dir);
            fmt::print("X: {} nodes, positive definite, lambda in [{:.6g}, {:.6g}]\n", r.model.size(),
                       r.model.lambda_min(), r.model.lambda_max());
            return 0;
        }

        const RunConfig cfg = resolve(c);
        if (*design) {
            const auto feeder = load_feeder(cfg);
            run_designs(cfg, feeder, cfg.output_dir, block);
            return 0;
        }
        if (*simulate) {
            const auto feeder = load_feeder(cfg);
            std::vector<SimulationJob> jobs;
            if (wants_ogd(cfg)) {
                if (gains_files.empty()) throw ConfigError("the ogd strategy needs --gains");
                for (const auto& g : gains_files) {
                    auto stem = fs::path(g).stem().string();
                    if (stem.rfind("gains_", 0) == 0) stem = stem.substr(6);
                    jobs.push_back({"ogd_" + stem, Strategy::OGD, load_gains_schedule(g)});
                }
            }
            for (auto& j : baseline_jobs(cfg)) jobs.push_back(std::move(j));
            const auto profiles = run_profiles(cfg, feeder);
            return report_outcomes(simulate_jobs(cfg, feeder, profiles, jobs, cfg.output_dir, c.svg));
        }
        if (*day_run) {
            const auto feeder = load_feeder(cfg);
            const fs::path out = cfg.output_dir;
            build_x_outputs(cfg, out / "x");
            std::vector<SimulationJob> jobs;
            if (wants_ogd(cfg)) {
                for (auto& d : run_designs(cfg, feeder, out / "design", std::nullopt)) {
                    jobs.push_back({"ogd_" + epsilon_tag(d.epsilon), Strategy::OGD, std::move(d.schedule)});
                }
            }
            for (auto& j : baseline_jobs(cfg)) jobs.push_back(std::move(j));
            const auto profiles = run_profiles(cfg, feeder);
            return report_outcomes(simulate_jobs(cfg, feeder, profiles, jobs, out / "sim", c.svg));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (dynamic_cast<const NoFeasibleStart*>(&e) != nullptr) {
            std::cerr << "hint: relax the prescribed probability with --epsilon\n";
        }
        return exit_code_for(e);
    }
    return 0;
}
