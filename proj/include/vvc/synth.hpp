#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vvc/netmodel.hpp"
#include "vvc/scenarios.hpp"

namespace vvc {

/// Shape of a synthetic day. Hours are local time in [0, 24).
struct DayShape {
    double pv_noon_h = 13.0;
    double pv_spread_h = 2.8;  // standard deviation of the PV bell
    double sunrise_h = 6.0;
    double sunset_h = 20.0;
    double load_base = 0.15;      // fraction of the node's peak load
    double morning_h = 7.5;
    double morning_share = 0.35;  // morning peak relative to evening
    double evening_h = 19.5;
    double evening_spread_h = 1.6;
    double power_factor = 0.95;

    [[nodiscard]] double pv(double hour) const;    // in [0, 1]
    [[nodiscard]] double load(double hour) const;  // in [0, 1]
};

/// Feeder with its DERs (physical units) and a day-ahead forecast.
struct SyntheticFeeder {
    std::string name;
    std::vector<Line> lines;
    std::vector<Der> ders;  // s, q limits in kVA / kvar
    NetworkConfig config;
    ForecastSeries forecast;
};

/// Forecast means at the midpoint of every interval of one day.
ForecastSeries synthetic_day(const std::vector<double>& pv_peak, const std::vector<double>& load_peak,
                             const DayShape& shape, double interval_s);

/// Eight-node feeder: a short trunk with seven PV laterals, sized so that
/// the uncontrolled day crosses 1.05 p.u. around noon and 0.95 p.u. in the
/// evening.
SyntheticFeeder make_feeder8(double interval_s = 1800.0);

/// 42-node stand-in: a randomized radial low-voltage feeder with 20, 25 and
/// 31 kVA inverters.
SyntheticFeeder make_feeder42(std::uint64_t seed = 42, double interval_s = 1800.0);

/// Writes network.csv, ders.csv, network.json and forecast.csv into `dir`.
void write_feeder(const std::filesystem::path& dir, const SyntheticFeeder& feeder);

}  // namespace vvc
