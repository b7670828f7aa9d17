#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vvc/controller.hpp"
#include "vvc/netmodel.hpp"
#include "vvc/powerflow.hpp"
#include "vvc/scenarios.hpp"

namespace vvc {

// ---------------------------------------------------------------------------
// Protection and baseline curve

struct ProtectionSettings {
    double instant_trip = 1.06;  // p.u.
    double sustained = 1.05;     // p.u.
    double sustained_s = 600.0;
    double reconnect_s = 60.0;
};

struct ProtectionState {
    bool connected = true;
    long long over_steps = 0;   // consecutive steps above `sustained` while connected
    long long under_steps = 0;  // consecutive steps at or below `sustained` while disconnected
};

/// Steps needed to cover `seconds` at step length `tau`.
long long steps_for(double seconds, double tau);

ProtectionState protection_step(const ProtectionState& state, double v_local, double tau,
                                 const ProtectionSettings& settings = {});

/// Piecewise-linear Volt/Var curve through (0.95, +cap), (0.99, 0), (1.01, 0),
/// (1.05, -cap) with cap = min(0.44 s, sqrt(s^2 - p^2)), flat outside.
double static_voltvar(double v_local, double p_g, double s_g);

// ---------------------------------------------------------------------------
// Profiles and gains schedules

/// Per-second non-controllable injections, N x seconds.
struct Profiles {
    Eigen::MatrixXd p_av, p_l, q_l;

    [[nodiscard]] int node_count() const noexcept { return static_cast<int>(p_av.rows()); }
    [[nodiscard]] long long seconds() const noexcept { return p_av.cols(); }
    [[nodiscard]] Injections at(long long second) const;
    static Profiles zeros(int n, long long seconds);
};

/// Reads `t_seconds,node,p_av_pu,p_l_pu,q_l_pu`; t runs 0, 1, 2, ... and every
/// node appears once per second.
Profiles load_profiles(const std::filesystem::path& path, int node_count);
void write_profiles(const std::filesystem::path& path, const Profiles& profiles);

/// Forecast means plus an AR(1) perturbation per component whose marginal
/// matches the uncertainty model; `correlation` is the lag-one coefficient.
Profiles synthesize_profiles(const ForecastSeries& forecast, const UncertaintyModel& model, double correlation);

struct GainsBlock {
    double start_s = 0.0;
    Gains gains;
};
using GainsSchedule = std::vector<GainsBlock>;

/// Gains of the last block starting at or before `t`.
Gains gains_at(const GainsSchedule& schedule, double t);
void validate_schedule(const GainsSchedule& schedule);
GainsSchedule load_gains_schedule(const std::filesystem::path& path);
void write_gains_schedule(const std::filesystem::path& path, const GainsSchedule& schedule);
std::string gains_schedule_json(const GainsSchedule& schedule);

// ---------------------------------------------------------------------------
// Closed-loop simulation

enum class Strategy { OGD, VoltVar, OnOff };
Strategy parse_strategy(const std::string& name);
const char* strategy_name(Strategy s);

/// Linear plant v = X A q + rho, with rho given per profile second. Used for
/// models without a nonlinear solver (for example per-phase X from file).
struct LinearPlant {
    Eigen::MatrixXd X;    // N x N over all nodes
    Eigen::MatrixXd rho;  // N x seconds
};

struct SimOptions {
    double tau = 0.1;
    double nu_min = 0.95;
    double nu_max = 1.05;
    double start_s = 0.0;
    double duration_s = -1.0;  // negative: until the end of the profiles
    bool protection = true;
    ProtectionSettings protection_settings;
    PfOptions pf;
    /// Detailed node trace in windows of this many steps. A step is kept
    /// when the network-wide highest or lowest voltage has moved more than
    /// 1e-4 p.u. since the last kept step; each window also keeps its first
    /// step and the steps holding its highest and lowest voltage. 1 keeps
    /// every step, 0 disables.
    int record_window = 0;
    std::optional<LinearPlant> linear;
    double base_kva = 100.0;  // used with `linear`
};

struct TraceSnapshot {
    double t = 0.0;
    Eigen::VectorXd v;          // per node
    Eigen::VectorXd q;          // per node, 0 where no DER
    Eigen::VectorXd p;          // DER active injection per node
    std::vector<bool> connected;  // per node, true where no DER
};

/// Per-step network summaries plus an optional decimated node trace. Power
/// quantities are p.u. per step.
struct SimTrace {
    std::string strategy;
    double tau = 0.1;
    double start_s = 0.0;
    double base_kva = 100.0;
    bool linear_model = false;
    GainsSchedule gains;

    std::vector<double> v_max, v_min;
    std::vector<double> line_loss, curtailment, reactive, der_power, load_power, slack_power, other_generation;
    std::vector<unsigned char> pf_failed;

    long long pf_failures = 0;
    long long trips = 0;
    long long reconnects = 0;
    /// Steps where a connected DER saw v > instant_trip on two consecutive steps.
    long long protection_breaches = 0;
    /// max over steps and DERs of p^2 + q^2 - s^2.
    double capability_excess = -1.0;
    double max_abs_q = 0.0;

    std::vector<TraceSnapshot> snapshots;

    [[nodiscard]] long long steps() const noexcept { return static_cast<long long>(v_max.size()); }
};

/// Runs one strategy over the profiles. DER g reads the voltage at its node
/// from the previous step, updates its setpoints and protection state, and a
/// power-flow solve produces the next voltages. A failed solve flags the step
/// and holds the previous voltages. `fleet` must be one DER per node.
SimTrace run_simulation(const Network& net, const DerFleet& fleet, const Profiles& profiles, Strategy strategy,
                        const GainsSchedule& gains, const SimOptions& options = {});

// ---------------------------------------------------------------------------
// Metrics

struct CdfPoint {
    double p = 0.0;
    double value = 0.0;
};

/// Empirical quantiles at p = 0, 1/(points-1), ..., 1 (lower quantile).
std::vector<CdfPoint> quantile_table(std::vector<double> values, int points = 1001);

/// Quantiles of a weighted sample; equal weights give quantile_table.
std::vector<CdfPoint> weighted_quantile_table(const std::vector<double>& values, const std::vector<double>& weights,
                                              int points = 1001);

/// Lengths of maximal runs of `true`.
std::vector<long long> run_lengths(const std::vector<bool>& flags);

struct MetricsReport {
    std::string strategy;
    double tau = 0.1;
    long long steps = 0;
    std::vector<CdfPoint> v_max_cdf, v_min_cdf;
    std::vector<long long> gamma_v;  // violation run lengths in steps
    double violation_fraction = 0.0;
    double line_loss_kwh = 0.0;
    double curtailment_kwh = 0.0;
    double reactive_kvarh = 0.0;
    double der_kwh = 0.0;
    double load_kwh = 0.0;
    double slack_kwh = 0.0;
    double other_generation_kwh = 0.0;
    double balance_error = 0.0;  // relative mismatch of the integrated balance
    long long pf_failures = 0;
    long long trips = 0;
    long long reconnects = 0;
    bool linear_model = false;

    [[nodiscard]] double lost_kwh() const noexcept { return line_loss_kwh + curtailment_kwh; }
    /// Durations in seconds at quantile p of gamma_v (0 when empty).
    [[nodiscard]] double gamma_quantile_s(double p) const;
};

MetricsReport compute_metrics(const SimTrace& trace, double nu_min, double nu_max);

std::string metrics_json(const MetricsReport& report);
void write_metrics(const std::filesystem::path& dir, const MetricsReport& report);

// ---------------------------------------------------------------------------
// Trace files

/// Writes `t,node,v_pu,q_pu,p_pu,connected` from the recorded snapshots.
void write_trace(const std::filesystem::path& path, const SimTrace& trace);

struct TraceFile {
    std::vector<double> t;
    std::vector<Eigen::VectorXd> v, q, p;
    std::vector<std::vector<bool>> connected;
};
TraceFile read_trace(const std::filesystem::path& path);

struct TraceSummary {
    std::vector<CdfPoint> v_max_cdf, v_min_cdf;
    std::vector<double> gamma_s;  // violation durations in seconds
    double reactive_kvarh = 0.0;
    double der_kwh = 0.0;
};

/// Metrics recoverable from a node trace; durations use the smallest time
/// spacing in the file as the step length.
TraceSummary summarize_trace(const TraceFile& trace, double nu_min, double nu_max, double base_kva);

struct SvgSeries {
    std::string name;
    std::vector<CdfPoint> points;
};
/// Step plot of CDFs (x: value, y: p).
void write_cdf_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                   const std::vector<SvgSeries>& series);
/// Bar chart of named values.
void write_bar_svg(const std::filesystem::path& path, const std::string& title,
                   const std::vector<std::pair<std::string, double>>& bars);

}  // namespace vvc
