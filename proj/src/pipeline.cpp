#include "vvc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "vvc/csv.hpp"
#include "vvc/errors.hpp"

namespace vvc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(fmt::format("'{}' must be an object", where));
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("bad value for '{}': {}", key, e.what()));
    }
}

void read_path(const json& j, const char* key, const fs::path& base, fs::path& out) {
    if (!j.contains(key)) return;
    std::string s;
    read(j, key, s);
    out = s.empty() ? fs::path{} : (fs::path(s).is_absolute() ? fs::path(s) : base / s);
}

std::string path_text(const fs::path& p) { return p.string(); }

std::string step_kind_name(StepRule::Kind k) { return k == StepRule::Kind::Constant ? "constant" : "diminishing"; }

}  // namespace

void RunConfig::validate() const {
    if (network.empty()) throw ConfigError("'network' is required");
    if (ders.empty()) throw ConfigError("'ders' is required");
    if (forecast.empty()) throw ConfigError("'forecast' is required");
    for (const auto* p : {&network, &ders, &forecast, &network_config, &profiles, &x_file}) {
        if (!p->empty() && !fs::exists(*p)) throw ConfigError(fmt::format("file not found: '{}'", p->string()));
    }
    if (epsilon.empty()) throw ConfigError("design.epsilon needs at least one value");
    for (double eps : epsilon) {
        if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("design.epsilon values must lie in (0, 1]");
    }
    if (!(epsilon_q > 0.0 && epsilon_q <= 1.0)) throw ConfigError("design.epsilon_q must lie in (0, 1]");
    if (!(xi > 0.0) || !(d > 0.0) || !(e > 0.0)) throw ConfigError("design.xi, design.d and design.e must be positive");
    if (max_outer < 1 || samples < 1) throw ConfigError("design.max_outer and design.samples must be at least 1");
    if (!(step.exponent > 0.0 && step.exponent <= 1.0)) throw ConfigError("design.step.exponent must lie in (0, 1]");
    if (!(step.gamma > 0.0 && step.gamma <= 1.0)) throw ConfigError("design.step.gamma must lie in (0, 1]");
    uncertainty.validate();
    time_grid(tau_s, interval_s, horizon_s);
    if (!(0.0 < nu_min && nu_min < nu_max)) throw ConfigError("limits need 0 < nu_min < nu_max");
    if (strategies.empty()) throw ConfigError("simulation.strategies is empty");
    for (const auto& s : strategies) parse_strategy(s);
    if (!(profile_correlation >= 0.0 && profile_correlation < 1.0)) {
        throw ConfigError("simulation.profile_correlation must lie in [0, 1)");
    }
    if (record_window < 0) throw ConfigError("simulation.record_window must be >= 0");
}

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(fmt::format("config is not valid JSON: {}", e.what()));
    }
    reject_unknown(j,
                   {"network", "network_config", "ders", "forecast", "profiles", "x_file", "output_dir", "design",
                    "uncertainty", "timing", "limits", "simulation"},
                   "config");
    RunConfig c;
    read_path(j, "network", base_dir, c.network);
    read_path(j, "network_config", base_dir, c.network_config);
    read_path(j, "ders", base_dir, c.ders);
    read_path(j, "forecast", base_dir, c.forecast);
    read_path(j, "profiles", base_dir, c.profiles);
    read_path(j, "x_file", base_dir, c.x_file);
    read_path(j, "output_dir", base_dir, c.output_dir);
    if (!j.contains("output_dir")) c.output_dir = base_dir / c.output_dir;

    if (j.contains("design")) {
        const auto& d = j["design"];
        reject_unknown(d, {"epsilon", "epsilon_q", "xi", "d", "e", "max_outer", "samples", "step", "seed"}, "design");
        if (d.contains("epsilon")) {
            if (d["epsilon"].is_number()) {
                c.epsilon = {d["epsilon"].get<double>()};
            } else {
                read(d, "epsilon", c.epsilon);
            }
        }
        read(d, "epsilon_q", c.epsilon_q);
        read(d, "xi", c.xi);
        read(d, "d", c.d);
        read(d, "e", c.e);
        read(d, "max_outer", c.max_outer);
        read(d, "samples", c.samples);
        read(d, "seed", c.seed);
        if (d.contains("step")) {
            const auto& s = d["step"];
            reject_unknown(s, {"kind", "exponent", "gamma"}, "design.step");
            std::string kind = step_kind_name(c.step.kind);
            read(s, "kind", kind);
            if (kind == "diminishing") {
                c.step.kind = StepRule::Kind::Diminishing;
            } else if (kind == "constant") {
                c.step.kind = StepRule::Kind::Constant;
            } else {
                throw ConfigError(fmt::format("unknown step kind '{}'", kind));
            }
            read(s, "exponent", c.step.exponent);
            read(s, "gamma", c.step.gamma);
        }
    }
    if (j.contains("uncertainty")) {
        const auto& u = j["uncertainty"];
        reject_unknown(u, {"distribution", "sigma_pv", "sigma_load", "common_mode_pv", "beta_shape", "clip_sigmas"},
                       "uncertainty");
        std::string family = distribution_name(c.uncertainty.family);
        read(u, "distribution", family);
        c.uncertainty.family = parse_distribution(family);
        read(u, "sigma_pv", c.uncertainty.sigma_pv);
        read(u, "sigma_load", c.uncertainty.sigma_load);
        read(u, "common_mode_pv", c.uncertainty.common_mode_pv);
        read(u, "beta_shape", c.uncertainty.beta_shape);
        read(u, "clip_sigmas", c.uncertainty.clip_sigmas);
    }
    if (j.contains("timing")) {
        const auto& t = j["timing"];
        reject_unknown(t, {"tau_s", "interval_s", "horizon_s"}, "timing");
        read(t, "tau_s", c.tau_s);
        read(t, "interval_s", c.interval_s);
        read(t, "horizon_s", c.horizon_s);
    }
    if (j.contains("limits")) {
        const auto& l = j["limits"];
        reject_unknown(l, {"nu_min", "nu_max"}, "limits");
        read(l, "nu_min", c.nu_min);
        read(l, "nu_max", c.nu_max);
    }
    if (j.contains("simulation")) {
        const auto& s = j["simulation"];
        reject_unknown(s,
                       {"strategies", "protection", "start_s", "duration_s", "profile_seed", "profile_correlation",
                        "record_window", "linear_plant"},
                       "simulation");
        read(s, "strategies", c.strategies);
        read(s, "protection", c.protection);
        read(s, "start_s", c.start_s);
        read(s, "duration_s", c.duration_s);
        read(s, "profile_seed", c.profile_seed);
        read(s, "profile_correlation", c.profile_correlation);
        read(s, "record_window", c.record_window);
        read(s, "linear_plant", c.linear_plant);
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path.parent_path());
}

std::string run_config_json(const RunConfig& c) {
    json j;
    j["network"] = path_text(c.network);
    j["network_config"] = path_text(c.network_config);
    j["ders"] = path_text(c.ders);
    j["forecast"] = path_text(c.forecast);
    j["profiles"] = path_text(c.profiles);
    j["x_file"] = path_text(c.x_file);
    j["output_dir"] = path_text(c.output_dir);
    j["design"] = {{"epsilon", c.epsilon},
                   {"epsilon_q", c.epsilon_q},
                   {"xi", c.xi},
                   {"d", c.d},
                   {"e", c.e},
                   {"max_outer", c.max_outer},
                   {"samples", c.samples},
                   {"seed", c.seed},
                   {"step", {{"kind", step_kind_name(c.step.kind)}, {"exponent", c.step.exponent}, {"gamma", c.step.gamma}}}};
    j["uncertainty"] = {{"distribution", distribution_name(c.uncertainty.family)},
                        {"sigma_pv", c.uncertainty.sigma_pv},
                        {"sigma_load", c.uncertainty.sigma_load},
                        {"common_mode_pv", c.uncertainty.common_mode_pv},
                        {"beta_shape", c.uncertainty.beta_shape},
                        {"clip_sigmas", c.uncertainty.clip_sigmas}};
    j["timing"] = {{"tau_s", c.tau_s}, {"interval_s", c.interval_s}, {"horizon_s", c.horizon_s}};
    j["limits"] = {{"nu_min", c.nu_min}, {"nu_max", c.nu_max}};
    j["simulation"] = {{"strategies", c.strategies},
                       {"protection", c.protection},
                       {"start_s", c.start_s},
                       {"duration_s", c.duration_s},
                       {"profile_seed", c.profile_seed},
                       {"profile_correlation", c.profile_correlation},
                       {"record_window", c.record_window},
                       {"linear_plant", c.linear_plant}};
    return j.dump(2);
}

// ---------------------------------------------------------------------------

Feeder load_feeder(const RunConfig& config) {
    Feeder f;
    const NetworkConfig nc = config.network_config.empty() ? NetworkConfig{} : load_network_config(config.network_config);
    f.net = load_network(config.network, nc);
    f.fleet = load_ders(config.ders, f.net);
    f.aggregated = aggregate_colocated_ders(f.fleet);
    f.forecast = load_forecast(config.forecast, f.net.node_count(), config.interval_s);
    return f;
}

SensitivityModel full_sensitivity(const RunConfig& config, const Feeder& feeder) {
    if (config.x_file.empty()) return build_x_lindistflow(feeder.net);
    auto model = load_x_matrix(config.x_file);
    if (model.size() != feeder.net.node_count()) {
        throw SchemaError(fmt::format("X file has {} rows, network has {} nodes", model.size(), feeder.net.node_count()));
    }
    return model;
}

XReport build_x_outputs(const RunConfig& config, const fs::path& dir) {
    XReport r;
    r.from_file = !config.x_file.empty();
    if (r.from_file) {
        r.model = load_x_matrix(config.x_file);
    } else {
        const NetworkConfig nc =
            config.network_config.empty() ? NetworkConfig{} : load_network_config(config.network_config);
        r.model = build_x_lindistflow(load_network(config.network, nc));
    }
    fs::create_directories(dir);
    if (!r.from_file) write_x_matrix(dir / "x.csv", r.model.X);
    {
        std::ofstream out(dir / "eigenvalues.csv");
        out << "index,lambda_re,lambda_im\n";
        std::vector<std::pair<double, double>> ev;
        for (Eigen::Index i = 0; i < r.model.eig.lambda.size(); ++i) {
            ev.emplace_back(r.model.eig.lambda(i).real(), r.model.eig.lambda(i).imag());
        }
        std::sort(ev.begin(), ev.end());
        for (std::size_t i = 0; i < ev.size(); ++i) {
            out << i + 1 << ',' << csv::format(ev[i].first) << ',' << csv::format(ev[i].second) << '\n';
        }
    }
    json j;
    j["nodes"] = r.model.size();
    j["positive_definite"] = true;
    j["symmetric"] = r.model.symmetric;
    j["lambda_min"] = r.model.lambda_min();
    j["lambda_max"] = r.model.lambda_max();
    j["norm2"] = r.model.norm2;
    j["source"] = r.from_file ? "file" : "lindistflow";
    std::ofstream(dir / "x_report.json") << j.dump(2) << '\n';
    return r;
}

std::uint64_t block_seed(std::uint64_t seed, int block) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(block + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

DesignSpec design_spec(const RunConfig& config, const DerFleet& aggregated, double epsilon) {
    DesignSpec spec;
    const auto g = aggregated.size();
    spec.q_min = aggregated.q_min();
    spec.q_max = aggregated.q_max();
    spec.nu_min = Eigen::VectorXd::Constant(g, config.nu_min);
    spec.nu_max = Eigen::VectorXd::Constant(g, config.nu_max);
    spec.epsilon = {config.epsilon_q, config.epsilon_q, epsilon, epsilon};
    spec.xi = config.xi;
    spec.d = config.d;
    spec.e = config.e;
    spec.max_outer = config.max_outer;
    spec.step = config.step;
    return spec;
}

DayDesign design_day(const RunConfig& config, const Feeder& feeder, const SensitivityModel& reduced, double epsilon,
                     std::optional<int> only_block) {
    const auto grid = time_grid(config.tau_s, config.interval_s, config.horizon_s);
    const int b = static_cast<int>(grid.intervals);
    const int n_blocks = feeder.forecast.intervals() / b;
    if (n_blocks < 1 || feeder.forecast.intervals() % b != 0) {
        throw AlignmentError(fmt::format("forecast has {} intervals, not a whole number of {}-interval blocks",
                                         feeder.forecast.intervals(), b));
    }
    const DesignSpec spec = design_spec(config, feeder.aggregated, epsilon);
    ScenarioOptions options;
    options.samples = config.samples;

    DayDesign day;
    day.epsilon = epsilon;
    for (int k = 0; k < n_blocks; ++k) {
        if (only_block && *only_block != k) continue;
        UncertaintyModel model = config.uncertainty;
        model.seed = block_seed(config.seed, k);
        BlockDesign bd;
        bd.block = k;
        bd.start_s = k * config.horizon_s;
        const auto set = generate_scenarios(feeder.net, feeder.forecast.slice(k * b, b), model, options);
        bd.dropped = set.dropped;
        bd.resampled = set.resampled;
        const auto problem = make_design_problem(reduced, set.rho, spec);
        try {
            bd.solution = ogd_sca(problem);
        } catch (const NoFeasibleStart& e) {
            throw NoFeasibleStart(fmt::format("block {} (t = {} s, epsilon = {}): {}", k, bd.start_s, epsilon,
                                              e.what()));
        }
        auto report = json::parse(design_report_json(bd.solution, problem));
        report["block"] = k;
        report["start_s"] = bd.start_s;
        report["epsilon"] = epsilon;
        report["scenario_seed"] = model.seed;
        report["dropped_samples"] = bd.dropped;
        report["resampled_draws"] = bd.resampled;
        bd.report_json = report.dump();
        day.schedule.push_back({bd.start_s, bd.solution.gains});
        day.blocks.push_back(std::move(bd));
    }
    if (day.blocks.empty()) throw ConfigError("no design block selected");
    return day;
}

std::string epsilon_tag(double epsilon) { return fmt::format("eps{:g}", epsilon); }

void write_day_design(const fs::path& dir, const DayDesign& design) {
    fs::create_directories(dir);
    const auto tag = epsilon_tag(design.epsilon);
    write_gains_schedule(dir / fmt::format("gains_{}.json", tag), design.schedule);
    json reports = json::array();
    for (const auto& b : design.blocks) reports.push_back(json::parse(b.report_json));
    std::ofstream(dir / fmt::format("design_{}.json", tag)) << reports.dump(2) << '\n';
}

Profiles run_profiles(const RunConfig& config, const Feeder& feeder) {
    if (!config.profiles.empty()) return load_profiles(config.profiles, feeder.net.node_count());
    UncertaintyModel model = config.uncertainty;
    model.seed = config.profile_seed;
    return synthesize_profiles(feeder.forecast, model, config.profile_correlation);
}

SimOptions simulation_options(const RunConfig& config, const Feeder& feeder, const Profiles& profiles) {
    SimOptions o;
    o.tau = config.tau_s;
    o.nu_min = config.nu_min;
    o.nu_max = config.nu_max;
    o.start_s = config.start_s;
    o.duration_s = config.duration_s;
    o.protection = config.protection;
    o.record_window = config.record_window;
    o.base_kva = feeder.net.base_kva();
    if (config.linear_plant) {
        LinearPlant plant;
        plant.X = full_sensitivity(config, feeder).X;
        plant.rho.resize(feeder.net.node_count(), profiles.seconds());
        for (long long t = 0; t < profiles.seconds(); ++t) {
            plant.rho.col(t) = compute_rho(feeder.net, profiles.at(t).state());
        }
        o.linear = std::move(plant);
    }
    return o;
}

std::vector<SimulationOutcome> simulate_jobs(const RunConfig& config, const Feeder& feeder, const Profiles& profiles,
                                             const std::vector<SimulationJob>& jobs, const fs::path& dir, bool svg) {
    fs::create_directories(dir);
    const SimOptions options = simulation_options(config, feeder, profiles);
    std::vector<SimulationOutcome> outcomes;
    for (const auto& job : jobs) {
        SimulationOutcome out;
        out.label = job.label;
        try {
            const auto trace = run_simulation(feeder.net, feeder.aggregated, profiles, job.strategy, job.gains, options);
            auto m = compute_metrics(trace, config.nu_min, config.nu_max);
            m.strategy = job.label;
            write_metrics(dir / job.label, m);
            if (config.record_window > 0) write_trace(dir / job.label / "trace.csv", trace);
            out.metrics = std::move(m);
        } catch (const std::exception& e) {
            out.error = e.what();
            out.exit_code = exit_code_for(e);
        }
        outcomes.push_back(std::move(out));
    }

    std::ofstream cmp(dir / "comparison.csv");
    cmp << "label,status,violation_fraction,reactive_kvarh,line_loss_kwh,curtailment_kwh,lost_kwh,"
           "violation_p95_s,trips,pf_failures\n";
    for (const auto& o : outcomes) {
        if (!o.metrics) {
            cmp << o.label << ",failed,,,,,,,,\n";
            continue;
        }
        const auto& m = *o.metrics;
        cmp << o.label << ",ok," << csv::format(m.violation_fraction) << ',' << csv::format(m.reactive_kvarh) << ','
            << csv::format(m.line_loss_kwh) << ',' << csv::format(m.curtailment_kwh) << ',' << csv::format(m.lost_kwh())
            << ',' << csv::format(m.gamma_quantile_s(0.95)) << ',' << m.trips << ',' << m.pf_failures << '\n';
    }
    if (svg) {
        std::vector<SvgSeries> hi, lo;
        std::vector<std::pair<std::string, double>> q_bars, lost_bars;
        for (const auto& o : outcomes) {
            if (!o.metrics) continue;
            hi.push_back({o.label, o.metrics->v_max_cdf});
            lo.push_back({o.label, o.metrics->v_min_cdf});
            q_bars.emplace_back(o.label, o.metrics->reactive_kvarh);
            lost_bars.emplace_back(o.label, o.metrics->lost_kwh());
        }
        write_cdf_svg(dir / "cdf_v_max.svg", "Highest voltage per step", "V_max (p.u.)", hi);
        write_cdf_svg(dir / "cdf_v_min.svg", "Lowest voltage per step", "V_min (p.u.)", lo);
        write_bar_svg(dir / "reactive_energy.svg", "Reactive energy (kvarh)", q_bars);
        write_bar_svg(dir / "lost_energy.svg", "Line losses plus curtailment (kWh)", lost_bars);
    }
    return outcomes;
}

void analyze_traces(const std::vector<fs::path>& traces, const std::vector<std::string>& labels, double nu_min,
                    double nu_max, double base_kva, const fs::path& dir, bool svg) {
    if (traces.empty()) throw ConfigError("analyze needs at least one trace");
    if (labels.size() != traces.size()) throw ConfigError("one label per trace is required");
    std::vector<TraceSummary> sums;
    for (const auto& t : traces) sums.push_back(summarize_trace(read_trace(t), nu_min, nu_max, base_kva));
    fs::create_directories(dir);

    {
        std::ofstream out(dir / "cdf_voltage.csv");
        out << 'p';
        for (const auto& l : labels) out << ",v_max_" << l << ",v_min_" << l;
        out << '\n';
        const std::size_t rows = sums.front().v_max_cdf.size();
        for (std::size_t i = 0; i < rows; ++i) {
            out << csv::format(sums.front().v_max_cdf[i].p);
            for (const auto& s : sums) out << ',' << csv::format(s.v_max_cdf[i].value) << ',' << csv::format(s.v_min_cdf[i].value);
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "cdf_violation_duration.csv");
        out << "label,duration_s,cdf\n";
        for (std::size_t k = 0; k < sums.size(); ++k) {
            auto d = sums[k].gamma_s;
            if (d.empty()) {
                out << labels[k] << ",0,1\n";
                continue;
            }
            std::sort(d.begin(), d.end());
            const auto n = static_cast<double>(d.size());
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (i + 1 < d.size() && d[i + 1] == d[i]) continue;
                out << labels[k] << ',' << csv::format(d[i]) << ',' << csv::format(static_cast<double>(i + 1) / n)
                    << '\n';
            }
        }
    }
    {
        std::ofstream out(dir / "energy.csv");
        out << "label,reactive_kvarh,der_kwh\n";
        for (std::size_t k = 0; k < sums.size(); ++k) {
            out << labels[k] << ',' << csv::format(sums[k].reactive_kvarh) << ',' << csv::format(sums[k].der_kwh)
                << '\n';
        }
    }
    if (svg) {
        std::vector<SvgSeries> hi, lo;
        std::vector<std::pair<std::string, double>> bars;
        for (std::size_t k = 0; k < sums.size(); ++k) {
            hi.push_back({labels[k], sums[k].v_max_cdf});
            lo.push_back({labels[k], sums[k].v_min_cdf});
            bars.emplace_back(labels[k], sums[k].reactive_kvarh);
        }
        write_cdf_svg(dir / "cdf_v_max.svg", "Highest voltage per step", "V_max (p.u.)", hi);
        write_cdf_svg(dir / "cdf_v_min.svg", "Lowest voltage per step", "V_min (p.u.)", lo);
        write_bar_svg(dir / "reactive_energy.svg", "Reactive energy (kvarh)", bars);
    }
}

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (err->error_class()) {
            case ErrorClass::Input: return 2;
            case ErrorClass::Numerical: return 3;
            case ErrorClass::Infeasible: return 4;
        }
    }
    return 3;
}

}  // namespace vvc
