#include "vvc/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "vvc/csv.hpp"
#include "vvc/errors.hpp"

namespace vvc {

namespace {

double bell(double h, double centre, double spread) {
    const double z = (h - centre) / spread;
    return std::exp(-0.5 * z * z);
}

}  // namespace

double DayShape::pv(double hour) const {
    if (hour <= sunrise_h || hour >= sunset_h) return 0.0;
    // Taper to zero at sunrise and sunset.
    const double edge = std::sin(std::numbers::pi * (hour - sunrise_h) / (sunset_h - sunrise_h));
    return bell(hour, pv_noon_h, pv_spread_h) * std::sqrt(edge);
}

double DayShape::load(double hour) const {
    const double peaks = morning_share * bell(hour, morning_h, 1.0) + bell(hour, evening_h, evening_spread_h) +
                         bell(hour + 24.0, evening_h, evening_spread_h);
    return std::min(1.0, load_base + (1.0 - load_base) * peaks);
}

ForecastSeries synthetic_day(const std::vector<double>& pv_peak, const std::vector<double>& load_peak,
                             const DayShape& shape, double interval_s) {
    if (pv_peak.size() != load_peak.size()) throw DomainError("PV and load peaks differ in length");
    const auto grid = time_grid(1.0, interval_s, 86400.0);
    const double tan_phi = std::tan(std::acos(shape.power_factor));
    const int n = static_cast<int>(pv_peak.size());
    ForecastSeries f;
    f.interval_s = interval_s;
    for (long long m = 0; m < grid.intervals; ++m) {
        const double hour = (static_cast<double>(m) + 0.5) * interval_s / 3600.0;
        auto z = Injections::zeros(n);
        for (int i = 0; i < n; ++i) {
            z.p_av(i) = pv_peak[i] * shape.pv(hour);
            z.p_l(i) = load_peak[i] * shape.load(hour);
            z.q_l(i) = z.p_l(i) * tan_phi;
        }
        f.mean.push_back(std::move(z));
    }
    return f;
}

SyntheticFeeder make_feeder8(double interval_s) {
    SyntheticFeeder f;
    f.name = "feeder8";
    f.config = {100.0, 0.4, 1.0};
    f.lines = {
        {0, 1, 0.010, 0.006},
        {1, 2, 0.130, 0.080}, {1, 3, 0.150, 0.090}, {1, 4, 0.140, 0.085}, {1, 5, 0.125, 0.080},
        {1, 6, 0.145, 0.095}, {1, 7, 0.135, 0.085}, {1, 8, 0.150, 0.090},
    };
    const std::vector<double> size_kva = {42, 44, 46, 42, 44, 42, 46};
    for (int g = 0; g < 7; ++g) {
        const double s = size_kva[g];
        f.ders.push_back({g + 1, g + 2, s, -0.44 * s, 0.44 * s});
    }
    const std::vector<double> pv = {0.0, 0.31, 0.32, 0.33, 0.30, 0.32, 0.31, 0.33};
    const std::vector<double> load = {0.10, 0.22, 0.21, 0.23, 0.20, 0.22, 0.21, 0.23};
    f.forecast = synthetic_day(pv, load, DayShape{}, interval_s);
    return f;
}

SyntheticFeeder make_feeder42(std::uint64_t seed, double interval_s) {
    SyntheticFeeder f;
    f.name = "feeder42";
    f.config = {100.0, 0.4, 1.0};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> trunk_x(0.001, 0.002);
    std::uniform_real_distribution<double> lateral_x(0.0015, 0.004);
    const int trunk = 8;
    for (int i = 1; i <= trunk; ++i) {
        const double x = trunk_x(rng);
        f.lines.push_back({i - 1, i, 1.6 * x, x});
    }
    for (int i = trunk + 1; i <= 42; ++i) {
        // Laterals hang off the trunk or off a recent lateral node.
        std::uniform_int_distribution<int> pick(1, i - 1);
        int parent = pick(rng);
        if (parent > trunk && i - parent > 6) parent = 1 + parent % trunk;
        const double x = lateral_x(rng);
        f.lines.push_back({parent, i, 1.6 * x, x});
    }
    const double sizes[] = {20.0, 25.0, 31.0};
    std::uniform_int_distribution<int> which(0, 2);
    std::bernoulli_distribution has_pv(0.6);
    std::vector<double> pv(42, 0.0), load(42, 0.0);
    std::uniform_real_distribution<double> load_kw(3.0, 8.0);
    int id = 1;
    for (int node = 1; node <= 42; ++node) {
        load[node - 1] = load_kw(rng) / f.config.base_kva;
        if (node > 2 && has_pv(rng)) {
            const double s = sizes[which(rng)];
            f.ders.push_back({id++, node, s, -0.44 * s, 0.44 * s});
            pv[node - 1] = 0.8 * s / f.config.base_kva;
        }
    }
    f.forecast = synthetic_day(pv, load, DayShape{}, interval_s);
    return f;
}

void write_feeder(const std::filesystem::path& dir, const SyntheticFeeder& feeder) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "network.csv");
        if (!out) throw ParseError(fmt::format("cannot write into '{}'", dir.string()));
        out << "from,to,r_pu,x_pu\n";
        for (const auto& l : feeder.lines) {
            out << l.from << ',' << l.to << ',' << csv::format(l.r) << ',' << csv::format(l.x) << '\n';
        }
    }
    {
        std::ofstream out(dir / "ders.csv");
        out << "id,node,s_kva,qmin_kvar,qmax_kvar\n";
        for (const auto& d : feeder.ders) {
            out << d.id << ',' << d.node << ',' << csv::format(d.s_rated) << ',' << csv::format(d.q_min) << ','
                << csv::format(d.q_max) << '\n';
        }
    }
    {
        nlohmann::json j;
        j["base_power_kva"] = feeder.config.base_kva;
        j["base_voltage_kv"] = feeder.config.base_kv;
        j["slack_voltage_pu"] = feeder.config.slack_voltage;
        std::ofstream(dir / "network.json") << j.dump(2) << '\n';
    }
    write_forecast(dir / "forecast.csv", feeder.forecast);
}

}  // namespace vvc
