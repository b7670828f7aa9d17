#include "vvc/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "vvc/csv.hpp"
#include "vvc/errors.hpp"

namespace vvc {

Injections Injections::zeros(int n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
}

InjectionState Injections::state(const DerFleet& fleet) const {
    auto inj = InjectionState::zeros(size(), fleet);
    inj.p_av = p_av;
    inj.p_l = p_l;
    inj.q_l = q_l;
    return inj;
}

ForecastSeries ForecastSeries::slice(int first, int count) const {
    if (first < 0 || count < 1 || first + count > intervals()) {
        throw DomainError(fmt::format("intervals [{}, {}) are outside the forecast (b = {})", first, first + count,
                                      intervals()));
    }
    ForecastSeries out;
    out.interval_s = interval_s;
    out.mean.assign(mean.begin() + first, mean.begin() + first + count);
    return out;
}

void ForecastSeries::validate() const {
    if (mean.empty()) throw ConfigError("forecast has no intervals");
    if (!(interval_s > 0.0)) throw ConfigError("forecast interval length must be positive");
    const int n = node_count();
    for (const auto& z : mean) {
        if (z.p_av.size() != n || z.p_l.size() != n || z.q_l.size() != n) {
            throw SchemaError("forecast intervals differ in node count");
        }
        if (!z.p_av.allFinite() || !z.p_l.allFinite() || !z.q_l.allFinite()) {
            throw DomainError("forecast has non-finite values");
        }
        if (z.p_av.minCoeff() < 0.0 || z.p_l.minCoeff() < 0.0) {
            throw DomainError("forecast available power and load must be non-negative");
        }
    }
}

ForecastSeries load_forecast(const std::filesystem::path& path, int node_count, double interval_s) {
    const auto table = csv::read_with_header(path, {"interval", "node", "p_av_pu", "p_l_pu", "q_l_pu"});
    std::map<long long, Injections> by_interval;
    std::map<long long, std::vector<bool>> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const long long m = table.integer(r, 0);
        const long long node = table.integer(r, 1);
        if (m < 0) throw SchemaError(fmt::format("{}:{}: negative interval", path.string(), table.line_numbers[r]));
        if (node < 1 || node > node_count) {
            throw SchemaError(fmt::format("{}:{}: node {} outside 1..{}", path.string(), table.line_numbers[r], node,
                                          node_count));
        }
        auto [it, fresh] = by_interval.try_emplace(m, Injections::zeros(node_count));
        auto& flags = seen[m];
        flags.resize(static_cast<std::size_t>(node_count), false);
        if (flags[node - 1]) {
            throw SchemaError(fmt::format("{}:{}: duplicate row for interval {} node {}", path.string(),
                                          table.line_numbers[r], m, node));
        }
        flags[node - 1] = true;
        it->second.p_av(node - 1) = table.number(r, 2);
        it->second.p_l(node - 1) = table.number(r, 3);
        it->second.q_l(node - 1) = table.number(r, 4);
    }
    ForecastSeries f;
    f.interval_s = interval_s;
    long long expect = 0;
    for (auto& [m, z] : by_interval) {
        if (m != expect) throw SchemaError(fmt::format("{}: interval {} is missing", path.string(), expect));
        const auto& flags = seen[m];
        const auto missing = std::find(flags.begin(), flags.end(), false);
        if (missing != flags.end()) {
            throw SchemaError(fmt::format("{}: interval {} has no row for node {}", path.string(), m,
                                          missing - flags.begin() + 1));
        }
        f.mean.push_back(std::move(z));
        ++expect;
    }
    f.validate();
    return f;
}

void write_forecast(const std::filesystem::path& path, const ForecastSeries& forecast) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << "interval,node,p_av_pu,p_l_pu,q_l_pu\n";
    for (int m = 0; m < forecast.intervals(); ++m) {
        const auto& z = forecast.mean[m];
        for (int n = 0; n < z.size(); ++n) {
            out << m << ',' << n + 1 << ',' << csv::format(z.p_av(n)) << ',' << csv::format(z.p_l(n)) << ','
                << csv::format(z.q_l(n)) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------

Distribution parse_distribution(const std::string& name) {
    if (name == "gaussian") return Distribution::Gaussian;
    if (name == "uniform") return Distribution::Uniform;
    if (name == "scaled-beta") return Distribution::ScaledBeta;
    throw ConfigError(fmt::format("unknown distribution '{}' (gaussian, uniform, scaled-beta)", name));
}

const char* distribution_name(Distribution d) {
    switch (d) {
        case Distribution::Gaussian: return "gaussian";
        case Distribution::Uniform: return "uniform";
        case Distribution::ScaledBeta: return "scaled-beta";
    }
    return "?";
}

void UncertaintyModel::validate() const {
    if (!(sigma_pv >= 0.0) || !(sigma_load >= 0.0)) throw ConfigError("relative spreads must be non-negative");
    if (!(beta_shape > 0.0)) throw ConfigError("beta shape must be positive");
    if (!(clip_sigmas > 0.0)) throw ConfigError("clip_sigmas must be positive");
}

double standard_draw(const UncertaintyModel& model, std::mt19937_64& rng) {
    switch (model.family) {
        case Distribution::Gaussian: {
            std::normal_distribution<double> nd(0.0, 1.0);
            return std::clamp(nd(rng), -model.clip_sigmas, model.clip_sigmas);
        }
        case Distribution::Uniform: {
            const double w = std::sqrt(3.0);
            std::uniform_real_distribution<double> ud(-w, w);
            return ud(rng);
        }
        case Distribution::ScaledBeta: {
            std::gamma_distribution<double> gd(model.beta_shape, 1.0);
            const double a = gd(rng);
            const double b = gd(rng);
            const double beta = a / (a + b);
            return (beta - 0.5) * 2.0 * std::sqrt(2.0 * model.beta_shape + 1.0);
        }
    }
    return 0.0;
}

Delta sample_delta(const UncertaintyModel& model, const Injections& mean, std::mt19937_64& rng) {
    const int n = mean.size();
    Delta d{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    const double shock = model.common_mode_pv ? standard_draw(model, rng) : 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = model.common_mode_pv ? shock : standard_draw(model, rng);
        d.av(i) = std::max(mean.p_av(i) * model.sigma_pv * z, -mean.p_av(i));
    }
    for (int i = 0; i < n; ++i) {
        d.pl(i) = std::max(mean.p_l(i) * model.sigma_load * standard_draw(model, rng), -mean.p_l(i));
    }
    for (int i = 0; i < n; ++i) {
        const double q = mean.q_l(i);
        const double raw = std::abs(q) * model.sigma_load * standard_draw(model, rng);
        d.ql(i) = q >= 0.0 ? std::max(raw, -q) : std::min(raw, -q);
    }
    return d;
}

std::mt19937_64 sample_rng(std::uint64_t seed, int m, int s, int attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(s),
                      static_cast<std::uint32_t>(attempt)};
    return std::mt19937_64(seq);
}

ScenarioSet generate_scenarios(const Network& net, const ForecastSeries& forecast, const UncertaintyModel& model,
                               const ScenarioOptions& options) {
    forecast.validate();
    model.validate();
    if (forecast.node_count() != net.node_count()) {
        throw SchemaError(fmt::format("forecast has {} nodes, network has {}", forecast.node_count(),
                                      net.node_count()));
    }
    if (options.samples < 1) throw ConfigError("at least one sample per interval is required");
    if (options.attempts < 1) throw ConfigError("at least one attempt per sample is required");

    ScenarioSet set;
    set.seed = model.seed;
    set.rho.resize(static_cast<std::size_t>(forecast.intervals()));
    for (int m = 0; m < forecast.intervals(); ++m) {
        const auto& mean = forecast.mean[m];
        auto& out = set.rho[m];
        out.reserve(static_cast<std::size_t>(options.samples));
        for (int s = 0; s < options.samples; ++s) {
            bool ok = false;
            for (int attempt = 0; attempt < options.attempts && !ok; ++attempt) {
                auto rng = sample_rng(model.seed, m, s, attempt);
                const auto d = sample_delta(model, mean, rng);
                Injections z{mean.p_av + d.av, mean.p_l + d.pl, mean.q_l + d.ql};
                try {
                    out.push_back(compute_rho(net, z.state(), options.pf));
                    ok = true;
                } catch (const NoConvergence&) {
                    ++set.resampled;
                }
            }
            if (!ok) {
                ++set.dropped;
                --set.resampled;
            }
        }
        if (out.empty()) throw TooManyDropped(fmt::format("every draw of interval {} failed", m));
    }
    const double total = static_cast<double>(forecast.intervals()) * options.samples;
    if (set.dropped > options.max_drop_fraction * total) {
        throw TooManyDropped(fmt::format("{} of {} draws did not converge; the scenario set is unrepresentative",
                                         set.dropped, static_cast<long long>(total)));
    }
    return set;
}

void write_scenario_cache(const std::filesystem::path& path, const ScenarioSet& set) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    out << "m,s,node,rho_pu\n";
    for (std::size_t m = 0; m < set.rho.size(); ++m) {
        for (std::size_t s = 0; s < set.rho[m].size(); ++s) {
            const auto& r = set.rho[m][s];
            for (Eigen::Index n = 0; n < r.size(); ++n) {
                out << m << ',' << s << ',' << n + 1 << ',' << csv::format(r(n)) << '\n';
            }
        }
    }
}

ScenarioSet read_scenario_cache(const std::filesystem::path& path) {
    const auto table = csv::read_with_header(path, {"m", "s", "node", "rho_pu"});
    std::map<long long, std::map<long long, std::map<long long, double>>> raw;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        raw[table.integer(r, 0)][table.integer(r, 1)][table.integer(r, 2)] = table.number(r, 3);
    }
    ScenarioSet set;
    long long m_expect = 0;
    for (const auto& [m, samples] : raw) {
        if (m != m_expect++) throw SchemaError(fmt::format("{}: interval {} is missing", path.string(), m_expect - 1));
        auto& out = set.rho.emplace_back();
        for (const auto& [s, nodes] : samples) {
            Eigen::VectorXd v(static_cast<Eigen::Index>(nodes.size()));
            long long n_expect = 1;
            for (const auto& [node, value] : nodes) {
                if (node != n_expect) throw SchemaError(fmt::format("{}: m={} s={} lacks node {}", path.string(), m, s, n_expect));
                v(node - 1) = value;
                ++n_expect;
            }
            if (!out.empty() && out.front().size() != v.size()) {
                throw SchemaError(fmt::format("{}: m={} s={} has {} nodes", path.string(), m, s, v.size()));
            }
            out.push_back(std::move(v));
        }
    }
    return set;
}

// ---------------------------------------------------------------------------

namespace {

long long whole_ratio(double num, double den, const char* what) {
    const double r = num / den;
    const double rounded = std::round(r);
    if (!(rounded >= 1.0) || std::abs(r - rounded) > 1e-9 * std::max(1.0, rounded)) {
        throw AlignmentError(fmt::format("{}: {} / {} = {} is not a positive whole number", what, num, den, r));
    }
    return static_cast<long long>(rounded);
}

}  // namespace

TimeGrid time_grid(double tau, double interval_s, double horizon_s) {
    if (!(tau > 0.0) || !(interval_s > 0.0) || !(horizon_s > 0.0)) {
        throw AlignmentError("time scales must be positive");
    }
    TimeGrid g;
    g.steps_per_interval = whole_ratio(interval_s, tau, "forecast interval vs controller step");
    g.intervals = whole_ratio(horizon_s, interval_s, "horizon vs forecast interval");
    g.total_steps = g.steps_per_interval * g.intervals;
    return g;
}

}  // namespace vvc
