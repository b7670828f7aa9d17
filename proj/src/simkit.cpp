#include "vvc/simkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string_view>

#include <fmt/format.h>
#include <json.hpp>

#include "vvc/csv.hpp"
#include "vvc/errors.hpp"

namespace vvc {

long long steps_for(double seconds, double tau) {
    if (!(tau > 0.0)) throw DomainError("step length must be positive");
    return std::max(1LL, std::llround(seconds / tau));
}

ProtectionState protection_step(const ProtectionState& state, double v_local, double tau,
                                 const ProtectionSettings& settings) {
    ProtectionState s = state;
    if (s.connected) {
        s.under_steps = 0;
        if (v_local > settings.instant_trip) {
            s.connected = false;
            s.over_steps = 0;
        } else if (v_local > settings.sustained) {
            if (++s.over_steps >= steps_for(settings.sustained_s, tau)) {
                s.connected = false;
                s.over_steps = 0;
            }
        } else {
            s.over_steps = 0;
        }
    } else {
        s.over_steps = 0;
        if (v_local < settings.sustained) {
            if (++s.under_steps >= steps_for(settings.reconnect_s, tau)) {
                s.connected = true;
                s.under_steps = 0;
            }
        } else {
            s.under_steps = 0;
        }
    }
    return s;
}

double static_voltvar(double v_local, double p_g, double s_g) {
    const double cap = std::min(0.44 * s_g, std::sqrt(std::max(0.0, s_g * s_g - p_g * p_g)));
    if (v_local <= 0.95) return cap;
    if (v_local < 0.99) return cap * (0.99 - v_local) / 0.04;
    if (v_local <= 1.01) return 0.0;
    if (v_local < 1.05) return -cap * (v_local - 1.01) / 0.04;
    return -cap;
}

// ---------------------------------------------------------------------------

Injections Profiles::at(long long second) const {
    return {p_av.col(second), p_l.col(second), q_l.col(second)};
}

Profiles Profiles::zeros(int n, long long seconds) {
    return {Eigen::MatrixXd::Zero(n, seconds), Eigen::MatrixXd::Zero(n, seconds), Eigen::MatrixXd::Zero(n, seconds)};
}

namespace {

// Minimal streaming reader for large numeric CSV files.
class NumericCsv {
public:
    NumericCsv(const std::filesystem::path& path, const std::vector<std::string>& header)
        : in_(path), source_(path.string()) {
        if (!in_) throw ParseError(fmt::format("cannot open '{}'", source_));
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.empty() || line[0] == '#') continue;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::vector<std::string_view> cells;
            split(line, cells);
            if (cells.size() < header.size()) throw SchemaError(fmt::format("{}: short header", source_));
            for (std::size_t i = 0; i < header.size(); ++i) {
                if (cells[i] != header[i]) {
                    throw SchemaError(fmt::format("{}: expected column '{}' at position {}, found '{}'", source_,
                                                  header[i], i + 1, std::string(cells[i])));
                }
            }
            width_ = header.size();
            return;
        }
        throw SchemaError(fmt::format("{}: empty file", source_));
    }

    bool next(std::vector<double>& values) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            std::vector<std::string_view> cells;
            split(line, cells);
            if (cells.size() < width_) {
                throw SchemaError(fmt::format("{}:{}: expected {} cells, found {}", source_, line_no_, width_,
                                              cells.size()));
            }
            values.resize(width_);
            for (std::size_t i = 0; i < width_; ++i) {
                auto [ptr, ec] = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), values[i]);
                if (ec != std::errc() || ptr != cells[i].data() + cells[i].size()) {
                    throw ParseError(fmt::format("{}:{}: '{}' is not a number", source_, line_no_,
                                                 std::string(cells[i])));
                }
            }
            return true;
        }
        return false;
    }

    [[nodiscard]] std::string where() const { return fmt::format("{}:{}", source_, line_no_); }

private:
    static void split(std::string_view line, std::vector<std::string_view>& cells) {
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            auto cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
            while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
            while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
            cells.push_back(cell);
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
    }

    std::ifstream in_;
    std::string source_;
    std::size_t line_no_ = 0;
    std::size_t width_ = 0;
};

}  // namespace

Profiles load_profiles(const std::filesystem::path& path, int node_count) {
    NumericCsv reader(path, {"t_seconds", "node", "p_av_pu", "p_l_pu", "q_l_pu"});
    std::vector<double> av, pl, ql;
    std::vector<double> row;
    long long second = 0;
    int node = 0;
    while (reader.next(row)) {
        const double expect_t = static_cast<double>(second);
        if (row[0] != expect_t || row[1] != node + 1) {
            throw SchemaError(fmt::format("{}: expected t={} node={}, found t={} node={}", reader.where(), second,
                                          node + 1, row[0], row[1]));
        }
        if (!std::isfinite(row[2]) || !std::isfinite(row[3]) || !std::isfinite(row[4]) || row[2] < 0.0 ||
            row[3] < 0.0) {
            throw DomainError(fmt::format("{}: invalid injection values", reader.where()));
        }
        av.push_back(row[2]);
        pl.push_back(row[3]);
        ql.push_back(row[4]);
        if (++node == node_count) {
            node = 0;
            ++second;
        }
    }
    if (node != 0) throw SchemaError(fmt::format("{}: last second is incomplete", path.string()));
    if (second == 0) throw SchemaError(fmt::format("{}: no profile rows", path.string()));
    Profiles p;
    p.p_av = Eigen::Map<Eigen::MatrixXd>(av.data(), node_count, second);
    p.p_l = Eigen::Map<Eigen::MatrixXd>(pl.data(), node_count, second);
    p.q_l = Eigen::Map<Eigen::MatrixXd>(ql.data(), node_count, second);
    return p;
}

void write_profiles(const std::filesystem::path& path, const Profiles& profiles) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << "t_seconds,node,p_av_pu,p_l_pu,q_l_pu\n";
    for (long long t = 0; t < profiles.seconds(); ++t) {
        for (int n = 0; n < profiles.node_count(); ++n) {
            out << t << ',' << n + 1 << ',' << csv::format(profiles.p_av(n, t)) << ','
                << csv::format(profiles.p_l(n, t)) << ',' << csv::format(profiles.q_l(n, t)) << '\n';
        }
    }
}

Profiles synthesize_profiles(const ForecastSeries& forecast, const UncertaintyModel& model, double correlation) {
    forecast.validate();
    model.validate();
    if (!(correlation >= 0.0 && correlation < 1.0)) throw ConfigError("AR(1) correlation must lie in [0, 1)");
    const long long per_interval = steps_for(forecast.interval_s, 1.0);
    if (std::abs(per_interval - forecast.interval_s) > 1e-9) {
        throw AlignmentError("forecast intervals must be a whole number of seconds");
    }
    const int n = forecast.node_count();
    const long long seconds = per_interval * forecast.intervals();
    Profiles p = Profiles::zeros(n, seconds);

    std::seed_seq seq{static_cast<std::uint32_t>(model.seed), static_cast<std::uint32_t>(model.seed >> 32),
                      0x70726f66u};
    std::mt19937_64 rng(seq);
    const double innovation = std::sqrt(1.0 - correlation * correlation);
    const int pv_states = model.common_mode_pv ? 1 : n;
    Eigen::VectorXd e_av(pv_states), e_pl(n), e_ql(n);
    auto clip = [&](double e) {
        return model.family == Distribution::Gaussian ? std::clamp(e, -model.clip_sigmas, model.clip_sigmas) : e;
    };
    for (int i = 0; i < pv_states; ++i) e_av(i) = standard_draw(model, rng);
    for (int i = 0; i < n; ++i) e_pl(i) = standard_draw(model, rng);
    for (int i = 0; i < n; ++i) e_ql(i) = standard_draw(model, rng);

    for (long long t = 0; t < seconds; ++t) {
        if (t > 0) {
            for (int i = 0; i < pv_states; ++i) e_av(i) = clip(correlation * e_av(i) + innovation * standard_draw(model, rng));
            for (int i = 0; i < n; ++i) e_pl(i) = clip(correlation * e_pl(i) + innovation * standard_draw(model, rng));
            for (int i = 0; i < n; ++i) e_ql(i) = clip(correlation * e_ql(i) + innovation * standard_draw(model, rng));
        }
        const auto& z = forecast.mean[static_cast<std::size_t>(t / per_interval)];
        for (int i = 0; i < n; ++i) {
            const double ea = e_av(model.common_mode_pv ? 0 : i);
            p.p_av(i, t) = std::max(0.0, z.p_av(i) * (1.0 + model.sigma_pv * ea));
            p.p_l(i, t) = std::max(0.0, z.p_l(i) * (1.0 + model.sigma_load * e_pl(i)));
            const double q = z.q_l(i) + std::abs(z.q_l(i)) * model.sigma_load * e_ql(i);
            p.q_l(i, t) = z.q_l(i) >= 0.0 ? std::max(0.0, q) : std::min(0.0, q);
        }
    }
    return p;
}

// ---------------------------------------------------------------------------

void validate_schedule(const GainsSchedule& schedule) {
    if (schedule.empty()) throw ConfigError("gains schedule is empty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& b = schedule[i];
        if (!std::isfinite(b.start_s)) throw ConfigError("gains block start must be finite");
        if (i > 0 && !(b.start_s > schedule[i - 1].start_s)) {
            throw ConfigError("gains blocks must have increasing start times");
        }
        if (!b.gains.valid() || !(b.gains.eta > 0.0)) {
            throw ConfigError(fmt::format("gains block at {} s needs 0 < eta <= 1 and alpha >= 0", b.start_s));
        }
    }
}

Gains gains_at(const GainsSchedule& schedule, double t) {
    if (schedule.empty()) throw ConfigError("gains schedule is empty");
    auto it = std::upper_bound(schedule.begin(), schedule.end(), t,
                               [](double value, const GainsBlock& b) { return value < b.start_s; });
    if (it == schedule.begin()) return schedule.front().gains;
    return std::prev(it)->gains;
}

std::string gains_schedule_json(const GainsSchedule& schedule) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& b : schedule) j.push_back({{"start_s", b.start_s}, {"eta", b.gains.eta}, {"alpha", b.gains.alpha}});
    return j.dump(2);
}

void write_gains_schedule(const std::filesystem::path& path, const GainsSchedule& schedule) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << gains_schedule_json(schedule) << '\n';
}

GainsSchedule load_gains_schedule(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
    if (!j.is_array()) throw SchemaError(fmt::format("{}: expected a list of gains blocks", path.string()));
    GainsSchedule s;
    for (const auto& b : j) {
        if (!b.is_object() || !b.contains("start_s") || !b.contains("eta") || !b.contains("alpha")) {
            throw SchemaError(fmt::format("{}: every block needs start_s, eta and alpha", path.string()));
        }
        try {
            s.push_back({b.at("start_s").get<double>(), Gains{b.at("eta").get<double>(), b.at("alpha").get<double>()}});
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(fmt::format("{}: {}", path.string(), e.what()));
        }
    }
    validate_schedule(s);
    return s;
}

// ---------------------------------------------------------------------------

Strategy parse_strategy(const std::string& name) {
    if (name == "ogd" || name == "OGD") return Strategy::OGD;
    if (name == "voltvar" || name == "VoltVar") return Strategy::VoltVar;
    if (name == "onoff" || name == "ON/OFF" || name == "on-off") return Strategy::OnOff;
    throw ConfigError(fmt::format("unknown strategy '{}' (ogd, voltvar, onoff)", name));
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::OGD: return "ogd";
        case Strategy::VoltVar: return "voltvar";
        case Strategy::OnOff: return "onoff";
    }
    return "?";
}

namespace {

// Keeps, per window, the first step, the steps holding the highest and
// lowest voltage and the step right after each of them, so every kept row
// stands for the time until the next kept row.
struct WindowRecorder {
    // Unrecorded steps stay within this band of the last recorded row.
    static constexpr double band = 1e-4;
    int window = 0;
    int filled = 0;
    double ref_max = 0.0;
    double ref_min = 0.0;
    double best_max = -std::numeric_limits<double>::infinity();
    double best_min = std::numeric_limits<double>::infinity();
    std::vector<TraceSnapshot> rows;
    std::optional<TraceSnapshot> at_max, at_min;

    [[nodiscard]] bool needs_snapshot(double hi, double lo) const {
        return filled == 0 || rows.empty() || std::abs(hi - ref_max) > band || std::abs(lo - ref_min) > band ||
               hi > best_max || lo < best_min;
    }

    void add(const TraceSnapshot& s, double hi, double lo) {
        if (filled == 0 || rows.empty() || std::abs(hi - ref_max) > band || std::abs(lo - ref_min) > band) {
            rows.push_back(s);
            ref_max = hi;
            ref_min = lo;
        }
        if (hi > best_max) {
            best_max = hi;
            at_max = s;
        }
        if (lo < best_min) {
            best_min = lo;
            at_min = s;
        }
    }

    void flush(std::vector<TraceSnapshot>& out) {
        if (filled == 0) return;
        for (auto* r : {&at_max, &at_min}) {
            if (*r) rows.push_back(std::move(**r));
            r->reset();
        }
        std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.t < y.t; });
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0 && rows[i].t == rows[i - 1].t) continue;
            out.push_back(std::move(rows[i]));
        }
        rows.clear();
        filled = 0;
        best_max = -std::numeric_limits<double>::infinity();
        best_min = std::numeric_limits<double>::infinity();
    }
};

}  // namespace

SimTrace run_simulation(const Network& net, const DerFleet& fleet, const Profiles& profiles, Strategy strategy,
                        const GainsSchedule& gains, const SimOptions& options) {
    const bool linear = options.linear.has_value();
    const int n = linear ? static_cast<int>(options.linear->X.rows()) : net.node_count();
    if (!fleet.one_per_node()) throw DomainError("simulation needs one DER per node; aggregate co-located DERs");
    if (fleet.node_count() != n) throw SchemaError("DER fleet and network differ in node count");
    if (profiles.node_count() != n) {
        throw SchemaError(fmt::format("profiles have {} nodes, network has {}", profiles.node_count(), n));
    }
    if (linear) {
        const auto& lp = *options.linear;
        if (lp.X.cols() != n || lp.rho.rows() != n || lp.rho.cols() < profiles.seconds()) {
            throw SchemaError("linear plant dimensions do not match the profiles");
        }
    }
    if (strategy == Strategy::OGD) validate_schedule(gains);
    if (!(options.nu_min < options.nu_max)) throw ConfigError("voltage limits must satisfy nu_min < nu_max");

    const double tau = options.tau;
    const double horizon = static_cast<double>(profiles.seconds());
    if (!(options.start_s >= 0.0) || !(options.start_s < horizon)) throw ConfigError("start lies outside the profiles");
    const double duration = options.duration_s < 0.0 ? horizon - options.start_s : options.duration_s;
    if (options.start_s + duration > horizon + 1e-9) throw ConfigError("simulation runs past the end of the profiles");
    const long long total = steps_for(duration, tau);

    const int g_count = fleet.size();
    const auto der_nodes = fleet.node_indices();
    const Eigen::VectorXd rated = fleet.rated();
    const Eigen::VectorXd q_lo = fleet.q_min().cwiseMax(-rated);
    const Eigen::VectorXd q_hi = fleet.q_max().cwiseMin(rated);
    std::vector<bool> has_der(static_cast<std::size_t>(n), false);
    for (int node : der_nodes) has_der[node] = true;

    SimTrace trace;
    trace.strategy = strategy_name(strategy);
    trace.tau = tau;
    trace.start_s = options.start_s;
    trace.base_kva = linear ? options.base_kva : net.base_kva();
    trace.linear_model = linear;
    trace.gains = gains;
    for (auto* v : {&trace.v_max, &trace.v_min, &trace.line_loss, &trace.curtailment, &trace.reactive,
                    &trace.der_power, &trace.load_power, &trace.slack_power, &trace.other_generation}) {
        v->reserve(static_cast<std::size_t>(total));
    }
    trace.pf_failed.reserve(static_cast<std::size_t>(total));

    Eigen::VectorXd q = Eigen::VectorXd::Zero(g_count);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(g_count);
    std::vector<ProtectionState> prot(static_cast<std::size_t>(g_count));
    std::vector<bool> hot(static_cast<std::size_t>(g_count), false);

    InjectionState inj = InjectionState::zeros(n, fleet);
    inj.p_ctrl = Eigen::VectorXd::Zero(g_count);
    long long loaded_second = -1;
    auto load_second = [&](long long sec) {
        if (sec == loaded_second) return;
        inj.p_av = profiles.p_av.col(sec);
        inj.p_l = profiles.p_l.col(sec);
        inj.q_l = profiles.q_l.col(sec);
        loaded_second = sec;
    };
    auto second_of = [&](double t) {
        return std::clamp(static_cast<long long>(std::floor(t + 1e-9)), 0LL, profiles.seconds() - 1);
    };
    struct Solved {
        Eigen::VectorXd v;
        double loss = 0.0;
        double slack = 0.0;
    };
    auto solve = [&](long long sec) -> Solved {
        if (linear) {
            const auto& lp = *options.linear;
            Eigen::VectorXd injected = Eigen::VectorXd::Zero(n);
            for (int g = 0; g < g_count; ++g) injected(der_nodes[g]) += inj.q_ctrl(g);
            return {lp.X * injected + lp.rho.col(sec), 0.0, std::numeric_limits<double>::quiet_NaN()};
        }
        const auto sol = solve_pf(net, inj, options.pf);
        return {sol.v, sol.line_losses(net), sol.slack_active_power(net)};
    };

    // Initial measurement: no reactive support, uncurtailed DERs.
    load_second(second_of(options.start_s));
    for (int g = 0; g < g_count; ++g) inj.p_ctrl(g) = std::min(inj.p_av(der_nodes[g]), rated(g));
    Eigen::VectorXd v_prev;
    try {
        v_prev = solve(loaded_second).v;
    } catch (const NoConvergence&) {
        v_prev = Eigen::VectorXd::Constant(n, linear ? 1.0 : net.slack_voltage());
    }

    WindowRecorder rec;
    rec.window = options.record_window;
    for (long long k = 0; k < total; ++k) {
        const double t = options.start_s + static_cast<double>(k) * tau;
        const long long sec = second_of(t);
        load_second(sec);
        const Gains g_now = strategy == Strategy::OGD ? gains_at(gains, t) : Gains{};
        for (int g = 0; g < g_count; ++g) {
            const int node = der_nodes[g];
            const double v_local = v_prev(node);
            if (options.protection) {
                const bool was = prot[g].connected;
                prot[g] = protection_step(prot[g], v_local, tau, options.protection_settings);
                if (was && !prot[g].connected) ++trace.trips;
                if (!was && prot[g].connected) ++trace.reconnects;
            }
            if (!prot[g].connected) {
                q(g) = 0.0;
                p(g) = 0.0;
                continue;
            }
            const double p_av = inj.p_av(node);
            const double s = rated(g);
            switch (strategy) {
                case Strategy::OGD: {
                    const double next = q(g) + g_now.eta * (1.0 - v_local) - (1.0 - g_now.eta) * g_now.alpha * q(g);
                    q(g) = std::clamp(next, q_lo(g), q_hi(g));
                    p(g) = apply_reactive_priority(p_av, q(g), s);
                    break;
                }
                case Strategy::VoltVar:
                    p(g) = std::min(p_av, s);
                    q(g) = static_voltvar(v_local, p(g), s);
                    break;
                case Strategy::OnOff:
                    q(g) = 0.0;
                    p(g) = std::min(p_av, s);
                    break;
            }
        }
        inj.q_ctrl = q;
        inj.p_ctrl = p;

        Solved out;
        bool failed = false;
        try {
            out = solve(sec);
        } catch (const NoConvergence&) {
            failed = true;
            out.v = v_prev;
            out.loss = 0.0;
            out.slack = std::numeric_limits<double>::quiet_NaN();
            ++trace.pf_failures;
        }

        double curtail = 0.0, reactive = 0.0, der_p = 0.0, other = 0.0;
        for (int g = 0; g < g_count; ++g) {
            curtail += inj.p_av(der_nodes[g]) - p(g);
            reactive += std::abs(q(g));
            der_p += p(g);
            trace.max_abs_q = std::max(trace.max_abs_q, std::abs(q(g)));
            if (prot[g].connected) {
                trace.capability_excess =
                    std::max(trace.capability_excess, p(g) * p(g) + q(g) * q(g) - rated(g) * rated(g));
                const bool over = out.v(der_nodes[g]) > options.protection_settings.instant_trip;
                if (over && hot[g]) ++trace.protection_breaches;
                hot[g] = over;
            } else {
                hot[g] = false;
            }
        }
        for (int i = 0; i < n; ++i) {
            if (!has_der[i]) other += inj.p_av(i);
        }
        trace.v_max.push_back(out.v.maxCoeff());
        trace.v_min.push_back(out.v.minCoeff());
        trace.line_loss.push_back(out.loss);
        trace.curtailment.push_back(curtail);
        trace.reactive.push_back(reactive);
        trace.der_power.push_back(der_p);
        trace.load_power.push_back(inj.p_l.sum());
        trace.slack_power.push_back(out.slack);
        trace.other_generation.push_back(other);
        trace.pf_failed.push_back(failed ? 1 : 0);

        if (rec.window > 0) {
            auto snapshot = [&]() {
                TraceSnapshot s;
                s.t = t;
                s.v = out.v;
                s.q = Eigen::VectorXd::Zero(n);
                s.p = Eigen::VectorXd::Zero(n);
                s.connected.assign(static_cast<std::size_t>(n), true);
                for (int g = 0; g < g_count; ++g) {
                    s.q(der_nodes[g]) = q(g);
                    s.p(der_nodes[g]) = p(g);
                    s.connected[der_nodes[g]] = prot[g].connected;
                }
                return s;
            };
            const double hi = trace.v_max.back();
            const double lo = trace.v_min.back();
            if (rec.needs_snapshot(hi, lo)) {
                rec.add(snapshot(), hi, lo);
            } else if (k + 1 == total) {
                // The last row closes the span of the one before it.
                rec.rows.push_back(snapshot());
            }
            if (++rec.filled == rec.window) rec.flush(trace.snapshots);
        }
        v_prev = out.v;
    }
    if (rec.window > 0) rec.flush(trace.snapshots);
    return trace;
}

// ---------------------------------------------------------------------------

std::vector<CdfPoint> quantile_table(std::vector<double> values, int points) {
    std::vector<CdfPoint> table;
    if (values.empty() || points < 2) return table;
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    table.reserve(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double p = static_cast<double>(i) / (points - 1);
        const double rank = std::ceil(p * n - 1e-9) - 1.0;
        const auto idx = static_cast<std::size_t>(std::clamp(rank, 0.0, n - 1.0));
        table.push_back({p, values[idx]});
    }
    return table;
}

std::vector<CdfPoint> weighted_quantile_table(const std::vector<double>& values, const std::vector<double>& weights,
                                              int points) {
    std::vector<CdfPoint> table;
    if (values.empty() || points < 2) return table;
    if (weights.size() != values.size()) throw DomainError("one weight per value is required");
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("weights must have a positive sum");
    table.reserve(static_cast<std::size_t>(points));
    std::size_t idx = 0;
    double cum = weights[order[0]];
    for (int i = 0; i < points; ++i) {
        const double p = static_cast<double>(i) / (points - 1);
        while (idx + 1 < order.size() && cum < p * total * (1.0 - 1e-12)) cum += weights[order[++idx]];
        table.push_back({p, values[order[idx]]});
    }
    return table;
}

std::vector<long long> run_lengths(const std::vector<bool>& flags) {
    std::vector<long long> runs;
    long long current = 0;
    for (bool f : flags) {
        if (f) {
            ++current;
        } else if (current > 0) {
            runs.push_back(current);
            current = 0;
        }
    }
    if (current > 0) runs.push_back(current);
    return runs;
}

double MetricsReport::gamma_quantile_s(double p) const {
    if (gamma_v.empty()) return 0.0;
    std::vector<double> d(gamma_v.begin(), gamma_v.end());
    std::sort(d.begin(), d.end());
    const double rank = std::ceil(p * static_cast<double>(d.size()) - 1e-9) - 1.0;
    const auto idx = static_cast<std::size_t>(std::clamp(rank, 0.0, static_cast<double>(d.size()) - 1.0));
    return d[idx] * tau;
}

MetricsReport compute_metrics(const SimTrace& trace, double nu_min, double nu_max) {
    MetricsReport r;
    r.strategy = trace.strategy;
    r.tau = trace.tau;
    r.steps = trace.steps();
    r.pf_failures = trace.pf_failures;
    r.trips = trace.trips;
    r.reconnects = trace.reconnects;
    r.linear_model = trace.linear_model;
    r.v_max_cdf = quantile_table(trace.v_max);
    r.v_min_cdf = quantile_table(trace.v_min);

    std::vector<bool> violated(static_cast<std::size_t>(r.steps));
    long long count = 0;
    for (long long k = 0; k < r.steps; ++k) {
        violated[k] = trace.v_max[k] > nu_max || trace.v_min[k] < nu_min;
        count += violated[k] ? 1 : 0;
    }
    r.gamma_v = run_lengths(violated);
    r.violation_fraction = r.steps > 0 ? static_cast<double>(count) / static_cast<double>(r.steps) : 0.0;

    const double to_kwh = trace.tau / 3600.0 * trace.base_kva;
    double slack = 0.0, expected = 0.0, scale = 0.0;
    for (long long k = 0; k < r.steps; ++k) {
        r.line_loss_kwh += trace.line_loss[k] * to_kwh;
        r.curtailment_kwh += trace.curtailment[k] * to_kwh;
        r.reactive_kvarh += trace.reactive[k] * to_kwh;
        r.der_kwh += trace.der_power[k] * to_kwh;
        r.load_kwh += trace.load_power[k] * to_kwh;
        r.other_generation_kwh += trace.other_generation[k] * to_kwh;
        if (!trace.pf_failed[k] && std::isfinite(trace.slack_power[k])) {
            slack += trace.slack_power[k];
            expected += trace.load_power[k] + trace.line_loss[k] - trace.der_power[k] - trace.other_generation[k];
            scale += trace.load_power[k] + trace.der_power[k] + trace.other_generation[k];
        }
    }
    r.slack_kwh = slack * to_kwh;
    r.balance_error = scale > 0.0 ? std::abs(slack - expected) / scale : 0.0;
    return r;
}

std::string metrics_json(const MetricsReport& r) {
    nlohmann::json j;
    j["strategy"] = r.strategy;
    j["tau_s"] = r.tau;
    j["steps"] = r.steps;
    j["linear_model"] = r.linear_model;
    j["violation_fraction"] = r.violation_fraction;
    j["violation_runs"] = r.gamma_v.size();
    j["violation_p95_s"] = r.gamma_quantile_s(0.95);
    j["violation_max_s"] = r.gamma_quantile_s(1.0);
    j["energy"] = {{"line_loss_kwh", r.line_loss_kwh},   {"curtailment_kwh", r.curtailment_kwh},
                   {"lost_kwh", r.lost_kwh()},           {"reactive_kvarh", r.reactive_kvarh},
                   {"der_kwh", r.der_kwh},               {"load_kwh", r.load_kwh},
                   {"slack_kwh", r.slack_kwh},           {"other_generation_kwh", r.other_generation_kwh},
                   {"balance_error", r.balance_error}};
    j["pf_failures"] = r.pf_failures;
    j["trips"] = r.trips;
    j["reconnects"] = r.reconnects;
    auto quantile = [](const std::vector<CdfPoint>& t, double p) {
        if (t.empty()) return 0.0;
        const auto idx = static_cast<std::size_t>(std::llround(p * static_cast<double>(t.size() - 1)));
        return t[idx].value;
    };
    j["v_max"] = {{"p50", quantile(r.v_max_cdf, 0.5)}, {"p95", quantile(r.v_max_cdf, 0.95)},
                  {"max", quantile(r.v_max_cdf, 1.0)}};
    j["v_min"] = {{"p05", quantile(r.v_min_cdf, 0.05)}, {"p50", quantile(r.v_min_cdf, 0.5)},
                  {"min", quantile(r.v_min_cdf, 0.0)}};
    return j.dump(2);
}

namespace {

void write_voltage_cdf(const std::filesystem::path& path, const std::vector<CdfPoint>& hi,
                       const std::vector<CdfPoint>& lo) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << "p,v_max_pu,v_min_pu\n";
    for (std::size_t i = 0; i < hi.size(); ++i) {
        out << csv::format(hi[i].p) << ',' << csv::format(hi[i].value) << ',' << csv::format(lo.at(i).value) << '\n';
    }
}

void write_duration_cdf(const std::filesystem::path& path, std::vector<double> durations) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << "duration_s,cdf\n";
    if (durations.empty()) {
        out << "0,1\n";
        return;
    }
    std::sort(durations.begin(), durations.end());
    const auto n = static_cast<double>(durations.size());
    for (std::size_t i = 0; i < durations.size(); ++i) {
        if (i + 1 < durations.size() && durations[i + 1] == durations[i]) continue;
        out << csv::format(durations[i]) << ',' << csv::format(static_cast<double>(i + 1) / n) << '\n';
    }
}

}  // namespace

void write_metrics(const std::filesystem::path& dir, const MetricsReport& report) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "metrics.json") << metrics_json(report) << '\n';
    write_voltage_cdf(dir / "cdf_voltage.csv", report.v_max_cdf, report.v_min_cdf);
    std::vector<double> d;
    for (long long g : report.gamma_v) d.push_back(static_cast<double>(g) * report.tau);
    write_duration_cdf(dir / "cdf_violation_duration.csv", d);
}

// ---------------------------------------------------------------------------

void write_trace(const std::filesystem::path& path, const SimTrace& trace) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << "t,node,v_pu,q_pu,p_pu,connected\n";
    for (const auto& s : trace.snapshots) {
        const auto t = csv::format(s.t);
        for (Eigen::Index i = 0; i < s.v.size(); ++i) {
            out << t << ',' << i + 1 << ',' << csv::format(s.v(i)) << ',' << csv::format(s.q(i)) << ','
                << csv::format(s.p(i)) << ',' << (s.connected[i] ? 1 : 0) << '\n';
        }
    }
}

TraceFile read_trace(const std::filesystem::path& path) {
    NumericCsv reader(path, {"t", "node", "v_pu", "q_pu", "p_pu", "connected"});
    TraceFile tf;
    std::vector<double> row;
    std::vector<double> v, q, p;
    std::vector<bool> c;
    double t = std::numeric_limits<double>::quiet_NaN();
    std::size_t width = 0;
    auto close = [&]() {
        if (v.empty()) return;
        if (width == 0) width = v.size();
        if (v.size() != width) {
            throw SchemaError(fmt::format("{}: t={} has {} nodes, expected {}", path.string(), t, v.size(), width));
        }
        tf.t.push_back(t);
        tf.v.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        tf.q.push_back(Eigen::Map<Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size())));
        tf.p.push_back(Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())));
        tf.connected.push_back(c);
        v.clear();
        q.clear();
        p.clear();
        c.clear();
    };
    while (reader.next(row)) {
        if (row[0] != t) {
            close();
            if (!tf.t.empty() && !(row[0] > tf.t.back())) {
                throw SchemaError(fmt::format("{}: time must increase", reader.where()));
            }
            t = row[0];
        }
        if (row[1] != static_cast<double>(v.size() + 1)) {
            throw SchemaError(fmt::format("{}: expected node {}", reader.where(), v.size() + 1));
        }
        if (row[5] != 0.0 && row[5] != 1.0) throw SchemaError(fmt::format("{}: connected must be 0 or 1", reader.where()));
        v.push_back(row[2]);
        q.push_back(row[3]);
        p.push_back(row[4]);
        c.push_back(row[5] == 1.0);
    }
    close();
    if (tf.t.empty()) throw SchemaError(fmt::format("{}: no trace rows", path.string()));
    return tf;
}

TraceSummary summarize_trace(const TraceFile& trace, double nu_min, double nu_max, double base_kva) {
    TraceSummary s;
    const std::size_t n = trace.t.size();
    std::vector<double> hi(n), lo(n);
    for (std::size_t k = 0; k < n; ++k) {
        hi[k] = trace.v[k].maxCoeff();
        lo[k] = trace.v[k].minCoeff();
    }
    double step = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < n; ++k) step = std::min(step, trace.t[k] - trace.t[k - 1]);
    if (!std::isfinite(step)) step = 1.0;
    std::vector<double> span(n), steps(n);
    for (std::size_t k = 0; k < n; ++k) {
        span[k] = k + 1 < n ? trace.t[k + 1] - trace.t[k] : step;
        // Whole step counts keep the cumulative weights exact.
        steps[k] = std::max(1.0, std::round(span[k] / step));
    }
    s.v_max_cdf = weighted_quantile_table(hi, steps);
    s.v_min_cdf = weighted_quantile_table(lo, steps);

    double run = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (hi[k] > nu_max || lo[k] < nu_min) {
            run += span[k];
        } else if (run > 0.0) {
            s.gamma_s.push_back(run);
            run = 0.0;
        }
        s.reactive_kvarh += trace.q[k].cwiseAbs().sum() * span[k] / 3600.0 * base_kva;
        s.der_kwh += trace.p[k].sum() * span[k] / 3600.0 * base_kva;
    }
    if (run > 0.0) s.gamma_s.push_back(run);
    return s;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_cdf_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                   const std::vector<SvgSeries>& series) {
    const double w = 640, h = 400, left = 60, right = 20, top = 40, bottom = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
    for (const auto& s : series) {
        for (const auto& pt : s.points) {
            x0 = std::min(x0, pt.value);
            x1 = std::max(x1, pt.value);
        }
    }
    if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
    auto py = [&](double p) { return h - bottom - p * (h - top - bottom); };

    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n", w, h);
    out << fmt::format("<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n", w / 2,
                       svg_escape(title));
    out << fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", left,
                       top, w - left - right, h - top - bottom);
    for (int i = 0; i <= 4; ++i) {
        const double x = x0 + (x1 - x0) * i / 4.0;
        out << fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.4g}</text>\n", px(x),
                           h - bottom + 16, x);
        out << fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"end\">{:.2f}</text>\n",
                           left - 6, py(i / 4.0) + 4, i / 4.0);
    }
    out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n", w / 2, h - 12,
                       svg_escape(x_label));
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto* color = kPalette[k % std::size(kPalette)];
        std::string d;
        for (std::size_t i = 0; i < series[k].points.size(); ++i) {
            const auto& pt = series[k].points[i];
            d += fmt::format("{}{:.2f},{:.2f} ", i == 0 ? "M" : "L", px(pt.value), py(pt.p));
        }
        out << fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", d, color);
        out << fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>\n", left + 10,
                           top + 16 + 14 * k, color, svg_escape(series[k].name));
    }
    out << "</svg>\n";
}

void write_bar_svg(const std::filesystem::path& path, const std::string& title,
                   const std::vector<std::pair<std::string, double>>& bars) {
    const double w = 640, h = 400, left = 60, top = 40, bottom = 60;
    double top_value = 0.0;
    for (const auto& b : bars) top_value = std::max(top_value, b.second);
    if (top_value <= 0.0) top_value = 1.0;
    const double slot = (w - left - 20) / std::max<std::size_t>(1, bars.size());

    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n", w, h);
    out << fmt::format("<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n", w / 2,
                       svg_escape(title));
    for (std::size_t k = 0; k < bars.size(); ++k) {
        const double bh = std::max(0.0, bars[k].second) / top_value * (h - top - bottom);
        const double x = left + slot * k + slot * 0.15;
        out << fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x,
                           h - bottom - bh, slot * 0.7, bh, kPalette[k % std::size(kPalette)]);
        out << fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"11\" text-anchor=\"middle\">{:.4g}</text>\n",
                           x + slot * 0.35, h - bottom - bh - 4, bars[k].second);
        out << fmt::format("<text x=\"{:.1f}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                           x + slot * 0.35, h - bottom + 16, svg_escape(bars[k].first));
    }
    out << "</svg>\n";
}

}  // namespace vvc
