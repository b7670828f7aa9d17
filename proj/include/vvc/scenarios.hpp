#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vvc/netmodel.hpp"
#include "vvc/powerflow.hpp"

namespace vvc {

/// Non-controllable injections z = (p_av, p_l, q_l) over the N nodes, p.u.
struct Injections {
    Eigen::VectorXd p_av;
    Eigen::VectorXd p_l;
    Eigen::VectorXd q_l;

    static Injections zeros(int n);
    [[nodiscard]] int size() const noexcept { return static_cast<int>(p_av.size()); }
    /// InjectionState with every DER setpoint at zero.
    [[nodiscard]] InjectionState state(const DerFleet& fleet = {}) const;
};

/// Piecewise-constant forecast: one mean vector per interval of length
/// `interval_s`.
struct ForecastSeries {
    double interval_s = 1800.0;
    std::vector<Injections> mean;

    [[nodiscard]] int intervals() const noexcept { return static_cast<int>(mean.size()); }
    [[nodiscard]] double horizon_s() const noexcept { return interval_s * intervals(); }
    [[nodiscard]] int node_count() const { return mean.empty() ? 0 : mean.front().size(); }
    /// Intervals [first, first + count).
    [[nodiscard]] ForecastSeries slice(int first, int count) const;
    void validate() const;
};

/// Reads `interval,node,p_av_pu,p_l_pu,q_l_pu`. Intervals are numbered from
/// 0 and nodes from 1; every (interval, node) pair must appear exactly once.
ForecastSeries load_forecast(const std::filesystem::path& path, int node_count, double interval_s);
void write_forecast(const std::filesystem::path& path, const ForecastSeries& forecast);

enum class Distribution { Gaussian, Uniform, ScaledBeta };
Distribution parse_distribution(const std::string& name);
const char* distribution_name(Distribution d);

struct UncertaintyModel {
    Distribution family = Distribution::Gaussian;
    double sigma_pv = 0.10;    // relative spread of p_av
    double sigma_load = 0.05;  // relative spread of p_l and q_l
    /// One scalar shock shared by all PV instead of independent draws.
    bool common_mode_pv = false;
    /// Shape a of the symmetric Beta(a, a) used by ScaledBeta.
    double beta_shape = 2.0;
    /// Gaussian draws are clipped to this many standard deviations.
    double clip_sigmas = 3.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Delta {
    Eigen::VectorXd av, pl, ql;
};

/// Draws one perturbation of `mean`. Every component is independent (except
/// for the optional common PV shock) and truncated so that p_av and p_l stay
/// non-negative and q_l keeps the sign of its mean.
Delta sample_delta(const UncertaintyModel& model, const Injections& mean, std::mt19937_64& rng);

/// Standardized draw (zero mean, unit variance) from the model's family.
double standard_draw(const UncertaintyModel& model, std::mt19937_64& rng);

/// Generator for sample (m, s) at a given attempt, derived from the master seed.
std::mt19937_64 sample_rng(std::uint64_t seed, int m, int s, int attempt);

struct ScenarioSet {
    /// rho[m][s], full-network voltage magnitudes.
    std::vector<std::vector<Eigen::VectorXd>> rho;
    int dropped = 0;
    int resampled = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] int intervals() const noexcept { return static_cast<int>(rho.size()); }
};

struct ScenarioOptions {
    int samples = 100;
    int attempts = 5;
    double max_drop_fraction = 0.10;
    PfOptions pf;
};

/// rho^m[s] = compute_rho(z^m + delta) for every interval and sample.
/// Non-convergent draws are redrawn up to `attempts` times and then dropped.
/// Throws TooManyDropped when more than `max_drop_fraction` of the draws
/// are lost.
ScenarioSet generate_scenarios(const Network& net, const ForecastSeries& forecast, const UncertaintyModel& model,
                               const ScenarioOptions& options = {});

/// Writes / reads `m,s,node,rho_pu`.
void write_scenario_cache(const std::filesystem::path& path, const ScenarioSet& set);
ScenarioSet read_scenario_cache(const std::filesystem::path& path);

struct TimeGrid {
    long long steps_per_interval = 0;  // Delta
    long long intervals = 0;           // b
    long long total_steps = 0;         // T
};

/// Checks that the interval is a whole number of controller steps and the
/// horizon a whole number of intervals; throws AlignmentError otherwise.
TimeGrid time_grid(double tau, double interval_s, double horizon_s);

}  // namespace vvc
