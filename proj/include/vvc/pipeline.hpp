#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vvc/chanceopt.hpp"
#include "vvc/netmodel.hpp"
#include "vvc/scenarios.hpp"
#include "vvc/sensitivity.hpp"
#include "vvc/simkit.hpp"

namespace vvc {

/// Everything a run needs. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
    std::filesystem::path network;
    std::filesystem::path network_config;  // optional JSON with bases
    std::filesystem::path ders;
    std::filesystem::path forecast;
    std::filesystem::path profiles;  // empty: synthesize from the forecast
    std::filesystem::path x_file;    // empty: LinDistFlow from the network
    std::filesystem::path output_dir = "out";

    // design
    std::vector<double> epsilon{0.05};  // voltage families, one design per value
    double epsilon_q = 1.0 - 1e-9;      // reactive-box families
    double xi = 1e-4;
    double d = 1.0;
    double e = 1e-6;
    int max_outer = 200;
    int samples = 100;
    StepRule step;
    std::uint64_t seed = 1;
    UncertaintyModel uncertainty;

    // time scales
    double tau_s = 0.1;
    double interval_s = 1800.0;
    double horizon_s = 3600.0;

    // limits and simulation
    double nu_min = 0.95;
    double nu_max = 1.05;
    std::vector<std::string> strategies{"ogd", "voltvar", "onoff"};
    bool protection = true;
    double start_s = 0.0;
    double duration_s = -1.0;
    std::uint64_t profile_seed = 7;
    double profile_correlation = 0.98;
    int record_window = 0;
    bool linear_plant = false;

    void validate() const;
};

/// Strict reader: unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);
/// Full config with every default spelled out.
std::string run_config_json(const RunConfig& config);

/// Network, DERs and forecast of a run.
struct Feeder {
    Network net;
    DerFleet fleet;       // as listed
    DerFleet aggregated;  // one DER per node
    ForecastSeries forecast;
};

Feeder load_feeder(const RunConfig& config);

/// X over all nodes, from the override file or built from the network.
SensitivityModel full_sensitivity(const RunConfig& config, const Feeder& feeder);

struct XReport {
    SensitivityModel model;
    bool from_file = false;
};
/// Writes x.csv, eigenvalues.csv and x_report.json into `dir`.
XReport build_x_outputs(const RunConfig& config, const std::filesystem::path& dir);

/// Seed of the scenario set for one design block.
std::uint64_t block_seed(std::uint64_t seed, int block);

struct BlockDesign {
    int block = 0;
    double start_s = 0.0;
    DesignSolution solution;
    int dropped = 0;
    int resampled = 0;
    std::string report_json;
};

struct DayDesign {
    double epsilon = 0.0;
    GainsSchedule schedule;
    std::vector<BlockDesign> blocks;
};

DesignSpec design_spec(const RunConfig& config, const DerFleet& aggregated, double epsilon);

/// One design per Tτ block of the forecast. `only_block` restricts the run
/// to a single block.
DayDesign design_day(const RunConfig& config, const Feeder& feeder, const SensitivityModel& reduced, double epsilon,
                     std::optional<int> only_block = std::nullopt);

/// Label used in file names, e.g. "eps0.05".
std::string epsilon_tag(double epsilon);

/// Writes gains_<tag>.json and design_<tag>.json into `dir`.
void write_day_design(const std::filesystem::path& dir, const DayDesign& design);

/// Profiles from the config file, or synthesized from the forecast.
Profiles run_profiles(const RunConfig& config, const Feeder& feeder);

struct SimulationJob {
    std::string label;
    Strategy strategy = Strategy::OnOff;
    GainsSchedule gains;
};

struct SimulationOutcome {
    std::string label;
    std::optional<MetricsReport> metrics;
    std::string error;
    int exit_code = 0;
};

SimOptions simulation_options(const RunConfig& config, const Feeder& feeder, const Profiles& profiles);

/// Runs every job, writing <dir>/<label>/ outputs and <dir>/comparison.csv.
/// A failing job is reported and does not stop the others.
std::vector<SimulationOutcome> simulate_jobs(const RunConfig& config, const Feeder& feeder, const Profiles& profiles,
                                             const std::vector<SimulationJob>& jobs, const std::filesystem::path& dir,
                                             bool svg);

/// Merges trace files into side-by-side CDF tables under `dir`.
void analyze_traces(const std::vector<std::filesystem::path>& traces, const std::vector<std::string>& labels,
                    double nu_min, double nu_max, double base_kva, const std::filesystem::path& dir, bool svg);

/// Exit code for an exception: 2 input, 3 numerical, 4 infeasible.
int exit_code_for(const std::exception& e);

}  // namespace vvc
