// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "test_util.hpp"
#include "vvc/chanceopt.hpp"
#include "vvc/controller.hpp"
#include "vvc/errors.hpp"
#include "vvc/pipeline.hpp"
#include "vvc/powerflow.hpp"
#include "vvc/scenarios.hpp"
#include "vvc/sensitivity.hpp"
#include "vvc/simkit.hpp"

using namespace vvc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double lambda_max_sym(const Eigen::MatrixXd& X) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (X + X.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

// Stable gains with margin at least `margin` for spectrum in [lo, hi].
Gains stable_gains(std::mt19937_64& rng, double lo, double hi, double margin) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        const double eta = 0.05 + 0.9 * u(rng);
        const double a_hi = (2.0 - margin - eta * hi) / (1.0 - eta);
        const double a_lo = std::max(0.0, (margin - eta * lo) / (1.0 - eta));
        if (a_hi <= a_lo) continue;
        return {eta, a_lo + (a_hi - a_lo) * u(rng)};
    }
}

// ---------------------------------------------------------------------------

Outcome equilibrium_fixed_point() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> size(1, 20);
    std::uniform_real_distribution<double> urho(0.94, 1.08);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size(rng);
        const Eigen::MatrixXd X = testutil::random_spd(rng, n, 0.05, 0.8);
        Eigen::VectorXd rho(n);
        for (int i = 0; i < n; ++i) rho(i) = urho(rng);
        const Gains g = stable_gains(rng, 0.05, 0.8, 0.02);
        // Closed form.
        const Eigen::MatrixXd M = g.eta * X + (1.0 - g.eta) * g.alpha * Eigen::MatrixXd::Identity(n, n);
        const Eigen::VectorXd q_cf = M.partialPivLu().solve(g.eta * (Eigen::VectorXd::Ones(n) - rho));
        // Iterated control law.
        Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < 200000; ++k) {
            const Eigen::VectorXd next = step_unprojected(q, X * q + rho, g);
            const double change = (next - q).lpNorm<Eigen::Infinity>();
            q = next;
            if (change < 1e-15) break;
        }
        const auto lib = equilibrium(g, X, rho);
        worst = std::max({worst, (q - q_cf).lpNorm<Eigen::Infinity>(), (lib.q - q_cf).lpNorm<Eigen::Infinity>(),
                          (lib.nu - (X * q_cf + rho)).lpNorm<Eigen::Infinity>()});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-8 && secs < 5.0, fmt::format("max |q_iter - q*| = {:.2e}, {:.2f} s", worst, secs)};
}

Outcome stability_classifier() {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> size(1, 20);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int disagreements = 0, stable = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = size(rng);
        const Eigen::MatrixXd X = testutil::random_spd(rng, n, 0.01, 1.5);
        const Gains g{u(rng), 4.0 * u(rng)};
        const Eigen::MatrixXd A =
            (1.0 - (1.0 - g.eta) * g.alpha) * Eigen::MatrixXd::Identity(n, n) - g.eta * X;
        const double radius = Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X, Eigen::EigenvaluesOnly);
        const bool classified = classify_stability(g, es.eigenvalues()) == Stability::Stable;
        stable += classified ? 1 : 0;
        if (classified != (radius < 1.0)) ++disagreements;
    }
    return {disagreements == 0, fmt::format("{} disagreements in 1000 draws ({} stable)", disagreements, stable)};
}

Outcome gradient_oracle() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> size(1, 15);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = size(rng);
        const auto model = make_sensitivity_model(testutil::random_spd(rng, n, 0.05, 0.8));
        Eigen::VectorXd rho(n);
        for (int i = 0; i < n; ++i) rho(i) = 0.95 + 0.13 * u(rng);
        const double t = 0.05 + 1.9 * u(rng);
        const double x2 = -1.5 * u(rng);
        const Eigen::Vector2d x{t - x2, x2};
        const Eigen::MatrixXd G = grad_q(x, model, rho);
        for (int k = 0; k < 2; ++k) {
            const double h = 1e-6;
            Eigen::Vector2d xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            // Oracle: direct solves of (X + t I) q = 1 - rho.
            auto q_direct = [&](const Eigen::Vector2d& z) -> Eigen::VectorXd {
                const Eigen::MatrixXd M = model.X + z.sum() * Eigen::MatrixXd::Identity(n, n);
                return M.partialPivLu().solve(Eigen::VectorXd::Ones(n) - rho);
            };
            const Eigen::VectorXd fd = (q_direct(xp) - q_direct(xm)) / (2.0 * h);
            const double scale = std::max(fd.lpNorm<Eigen::Infinity>(), 1e-12);
            worst = std::max(worst, (G.row(k).transpose() - fd).lpNorm<Eigen::Infinity>() / scale);
        }
    }
    return {worst <= 1e-5, fmt::format("max relative error {:.2e} over 100 draws", worst)};
}

DesignProblem random_problem(std::mt19937_64& rng, int n, int samples) {
    DesignProblem p;
    p.model = make_sensitivity_model(testutil::random_spd(rng, n, 0.1, 0.8));
    p.spec.q_min = Eigen::VectorXd::Constant(n, -0.4);
    p.spec.q_max = Eigen::VectorXd::Constant(n, 0.4);
    p.spec.nu_min = Eigen::VectorXd::Constant(n, 0.95);
    p.spec.nu_max = Eigen::VectorXd::Constant(n, 1.05);
    p.spec.epsilon = {0.2, 0.2, 0.1, 0.1};
    std::normal_distribution<double> nd(0.0, 0.02);
    std::uniform_real_distribution<double> centre(0.97, 1.05);
    p.rho.resize(1);
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd r(n);
        const double c = centre(rng);
        for (int i = 0; i < n; ++i) r(i) = c + nd(rng);
        p.rho[0].push_back(r);
    }
    return p;
}

Outcome majorization() {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_gap = -1.0, worst_value = 0.0, worst_slope = 0.0;
    long long points = 0;
    for (int anchor = 0; anchor < 50; ++anchor) {
        const auto problem = random_problem(rng, 5, 8);
        const double t_hi = 2.0 - problem.model.lambda_max();
        const double t_p = 0.02 + (t_hi - 0.04) * u(rng);
        const double x2 = -0.5 * u(rng);
        const Eigen::Vector2d xp{t_p - x2, x2};
        const auto s = build_surrogates(xp, problem);
        auto h_at = [&](const Surrogates::Constraint& c, int sample, const Eigen::Vector2d& x) {
            const auto hv = eval_h(x, problem, problem.rho[c.interval][sample]);
            return hv.h[static_cast<int>(c.family)](c.node);
        };
        for (std::size_t c = 0; c < s.constraints.size(); ++c) {
            const auto& k = s.constraints[c];
            for (int sample = 0; sample < static_cast<int>(k.h.size()); ++sample) {
                worst_value = std::max(worst_value, std::abs(s.h_tilde(c, sample, xp) - h_at(k, sample, xp)));
                // Five-point stencil along 1'x.
                const Eigen::Vector2d e{0.5e-3, 0.5e-3};
                auto d_dt = [&](const std::function<double(const Eigen::Vector2d&)>& f) {
                    return (-f(xp + 2.0 * e) + 8.0 * f(xp + e) - 8.0 * f(xp - e) + f(xp - 2.0 * e)) / 12e-3;
                };
                const double fd_orig = d_dt([&](const Eigen::Vector2d& x) { return h_at(k, sample, x); });
                const double fd_tilde = d_dt([&](const Eigen::Vector2d& x) { return s.h_tilde(c, sample, x); });
                worst_slope = std::max(worst_slope, std::abs(fd_orig - fd_tilde));
                // Dense grid over the feasible region around the anchor.
                for (int i = -15; i <= 15; ++i) {
                    for (int j = -15; j <= 15; ++j) {
                        const Eigen::Vector2d x = xp + Eigen::Vector2d{0.04 * i, 0.04 * j};
                        const double t = x.sum();
                        if (t < 0.0 || t > t_hi || x(0) < 0.0 || x(1) > 0.0) continue;
                        worst_gap = std::max(worst_gap, h_at(k, sample, x) - s.h_tilde(c, sample, x));
                        ++points;
                    }
                }
            }
        }
    }
    const bool ok = worst_gap <= 1e-10 && worst_value <= 1e-8 && worst_slope <= 1e-8;
    return {ok, fmt::format("max h - h~ = {:.2e} over {} points, anchor value gap {:.2e}, slope gap {:.2e}",
                            worst_gap, points, worst_value, worst_slope)};
}

// Smallest over u >= 0 of the sample-averaged smooth hinge minus eps u.
double scan_min(const Eigen::VectorXd& h, double eps, double xi) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 200000; ++k) {
        const double uu = 1e-5 * k;
        double sum = 0.0;
        for (Eigen::Index i = 0; i < h.size(); ++i) sum += smooth_g(h(i), uu, eps, xi);
        best = std::min(best, sum / static_cast<double>(h.size()));
    }
    return best;
}

Outcome cvar_conservativeness() {
    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> bad(1e-3, 0.1), good(-1.0, -0.5);
    const int n = 1000;
    std::string detail;
    bool ok = true;
    for (double mass : {0.03, 0.05, 0.5}) {
        Eigen::VectorXd h(n);
        const int violating = static_cast<int>(std::lround(mass * n));
        for (int i = 0; i < n; ++i) h(i) = i < violating ? bad(rng) : good(rng);
        const double scan = scan_min(h, 0.05, 1e-4);
        const auto lib = minimize_hinge_over_u(h, 0.05, 1e-4);
        const bool satisfiable = scan <= 0.0;
        if (mass == 0.03) ok = ok && satisfiable;
        if (mass == 0.5) ok = ok && !satisfiable;
        ok = ok && (lib.value <= 0.0) == satisfiable && lib.value <= scan + 1e-9;
        detail += fmt::format("{}mass {:g}: min {:.3e} ({})", detail.empty() ? "" : ", ", mass, scan,
                              satisfiable ? "satisfiable" : "unsatisfiable");
    }
    return {ok, detail};
}

RunConfig feeder8_config() { return load_run_config(fs::path(VVC_DATA_DIR) / "feeder8" / "config.json"); }

Outcome sca_convergence() {
    RunConfig cfg = feeder8_config();
    cfg.samples = 100;
    const auto feeder = load_feeder(cfg);
    const auto reduced = reduce_to_der_nodes(full_sensitivity(cfg, feeder), feeder.aggregated);
    const auto t0 = Clock::now();
    const auto day = design_day(cfg, feeder, reduced, 0.05, 12);
    const double secs = seconds_since(t0);
    const auto& s = day.blocks.front().solution;
    // Deterministic constraints along the path: D = x1 - x2 is fixed.
    const double lam = lambda_max_sym(reduced.X);
    const double d = s.x(0) - s.x(1);
    bool deterministic = true;
    for (const auto& it : s.history) {
        const double x1 = 0.5 * (it.t + d), x2 = 0.5 * (it.t - d);
        deterministic = deterministic && it.t - 2.0 + lam <= 0.0 && it.t >= 0.0 && x1 >= 0.0 && x2 <= 0.0;
    }
    const bool ok = s.final_step < 1e-6 && s.iterations <= 200 && secs < 60.0 && deterministic;
    return {ok, fmt::format("{} iterations, final step {:.2e}, {:.1f} s, h5-h8 on all iterates: {}", s.iterations,
                            s.final_step, secs, deterministic ? "yes" : "no")};
}

struct DayResults {
    MetricsReport ogd05, ogd20, voltvar, onoff;
};

DayResults run_day() {
    RunConfig cfg = feeder8_config();
    cfg.epsilon = {0.05, 0.2};
    const auto feeder = load_feeder(cfg);
    const auto reduced = reduce_to_der_nodes(full_sensitivity(cfg, feeder), feeder.aggregated);
    std::vector<SimulationJob> jobs;
    for (double eps : cfg.epsilon) {
        auto d = design_day(cfg, feeder, reduced, eps);
        jobs.push_back({"ogd_" + epsilon_tag(eps), Strategy::OGD, d.schedule});
    }
    jobs.push_back({"voltvar", Strategy::VoltVar, {}});
    jobs.push_back({"onoff", Strategy::OnOff, {}});
    const auto profiles = run_profiles(cfg, feeder);
    const auto dir = fs::temp_directory_path() / "vvc_acceptance_day";
    const auto out = simulate_jobs(cfg, feeder, profiles, jobs, dir, false);
    for (const auto& o : out) {
        if (!o.metrics) throw std::runtime_error(fmt::format("{} failed: {}", o.label, o.error));
    }
    return {*out[0].metrics, *out[1].metrics, *out[2].metrics, *out[3].metrics};
}

Outcome epsilon_consistency(const DayResults& r) {
    const bool ok = r.ogd05.violation_fraction <= 0.05 + 0.05 && r.ogd20.violation_fraction <= 0.2 + 0.05 &&
                    r.ogd20.reactive_kvarh <= r.ogd05.reactive_kvarh;
    return {ok, fmt::format("violating steps {:.3f}% (eps 0.05), {:.3f}% (eps 0.2); reactive {:.1f} vs {:.1f} kvarh",
                            100.0 * r.ogd05.violation_fraction, 100.0 * r.ogd20.violation_fraction,
                            r.ogd05.reactive_kvarh, r.ogd20.reactive_kvarh)};
}

Outcome baseline_ordering(const DayResults& r) {
    const bool ok = r.ogd05.reactive_kvarh < r.voltvar.reactive_kvarh &&
                    r.ogd20.reactive_kvarh < r.voltvar.reactive_kvarh && r.onoff.lost_kwh() > r.ogd05.lost_kwh() &&
                    r.onoff.lost_kwh() > r.ogd20.lost_kwh();
    return {ok, fmt::format("reactive OGD {:.1f}/{:.1f} < VoltVar {:.1f} kvarh; lost ON/OFF {:.1f} > OGD {:.1f}/{:.1f} kWh",
                            r.ogd05.reactive_kvarh, r.ogd20.reactive_kvarh, r.voltvar.reactive_kvarh,
                            r.onoff.lost_kwh(), r.ogd05.lost_kwh(), r.ogd20.lost_kwh())};
}

Outcome violation_durations(const DayResults& r) {
    const double a = r.ogd05.gamma_quantile_s(0.95);
    const double b = r.ogd20.gamma_quantile_s(0.95);
    const double c = r.onoff.gamma_quantile_s(0.95);
    return {a <= b && b <= c, fmt::format("95th percentile {:g} s <= {:g} s <= {:g} s", a, b, c)};
}

Outcome protection_examples() {
    bool ok = true;
    for (double tau : {0.1, 1.0}) {
        ok = ok && !protection_step({}, 1.0601, tau).connected && protection_step({}, 1.06, tau).connected;
        const long long trip = std::llround(600.0 / tau);
        ProtectionState s;
        for (long long k = 1; k <= trip; ++k) {
            s = protection_step(s, 1.055, tau);
            ok = ok && s.connected == (k < trip);
        }
        const long long back = std::llround(60.0 / tau);
        ProtectionState off{false, 0, 0};
        for (long long k = 1; k <= back; ++k) {
            off = protection_step(off, 1.04, tau);
            ok = ok && off.connected == (k == back);
        }
    }
    return {ok, "instant trip, 10-minute trip and 1-minute reconnect at tau 0.1 s and 1 s"};
}

Outcome degenerate_design() {
    RunConfig cfg = feeder8_config();
    cfg.uncertainty.sigma_pv = 0.0;
    cfg.uncertainty.sigma_load = 0.0;
    cfg.horizon_s = cfg.interval_s;
    cfg.samples = 10;
    cfg.xi = 1e-8;
    const auto feeder = load_feeder(cfg);
    const auto reduced = reduce_to_der_nodes(full_sensitivity(cfg, feeder), feeder.aggregated);
    const int block = 25;
    const auto day = design_day(cfg, feeder, reduced, 0.05, block);
    const auto& s = day.blocks.front().solution;

    // Deterministic problem: q(t) = (X + t I)^-1 (1 - rho) is monotone in t,
    // the objective falls with t, so t* is the largest feasible t.
    const Eigen::VectorXd rho_full = compute_rho(feeder.net, feeder.forecast.mean[block].state());
    const int n = reduced.size();
    Eigen::VectorXd rho(n);
    for (int i = 0; i < n; ++i) rho(i) = rho_full(reduced.nodes[i]);
    const Eigen::VectorXd qmin = feeder.aggregated.q_min(), qmax = feeder.aggregated.q_max();
    auto feasible = [&](double t) {
        const Eigen::MatrixXd M = reduced.X + t * Eigen::MatrixXd::Identity(n, n);
        const Eigen::VectorXd q = M.ldlt().solve(Eigen::VectorXd::Ones(n) - rho);
        const Eigen::VectorXd v = reduced.X * q + rho;
        return (q.array() >= qmin.array()).all() && (q.array() <= qmax.array()).all() &&
               (v.array() >= cfg.nu_min).all() && (v.array() <= cfg.nu_max).all();
    };
    const double t_hi = 2.0 - lambda_max_sym(reduced.X);
    double t_star = t_hi;
    if (!feasible(t_hi)) {
        double lo = 0.0, hi = t_hi;
        for (int k = 0; k < 200; ++k) {
            const double mid = 0.5 * (lo + hi);
            (feasible(mid) ? lo : hi) = mid;
        }
        t_star = lo;
    }
    const Eigen::Vector2d x0 = s.start.x;
    const Eigen::Vector2d x_star = x0 + 0.5 * (t_star - x0.sum()) * Eigen::Vector2d::Ones();
    const double alpha = -x_star(1);
    const double eta = alpha / x_star(0);
    const double err = std::max(std::abs(eta - s.gains.eta), std::abs(alpha - s.gains.alpha));
    return {err <= 1e-4, fmt::format("deterministic (eta, alpha) = ({:.6f}, {:.6f}), chance design ({:.6f}, {:.6f}), "
                                     "max difference {:.2e}",
                                     eta, alpha, s.gains.eta, s.gains.alpha, err)};
}

Outcome lindistflow_fidelity() {
    std::mt19937_64 rng(1212);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    std::bernoulli_distribution vertex(0.5);
    double worst = 0.0;
    std::string detail;
    for (const char* name : {"feeder8", "feeder42"}) {
        const auto cfg = load_run_config(fs::path(VVC_DATA_DIR) / name / "config.json");
        const auto feeder = load_feeder(cfg);
        const auto model = build_x_lindistflow(feeder.net);
        const int n = feeder.net.node_count();
        double feeder_worst = 0.0;
        for (const auto& z : feeder.forecast.mean) {
            const Eigen::VectorXd rho = compute_rho(feeder.net, z.state());
            for (int draw = 0; draw < 8; ++draw) {
                Eigen::VectorXd q(n);
                for (int i = 0; i < n; ++i) q(i) = vertex(rng) ? (u(rng) < 0 ? -0.05 : 0.05) : u(rng);
                InjectionState st = z.state();
                st.der_nodes.resize(n);
                for (int i = 0; i < n; ++i) st.der_nodes[i] = i;
                st.q_ctrl = q;
                st.p_ctrl.resize(0);
                const Eigen::VectorXd v = solve_pf(feeder.net, st).v;
                feeder_worst = std::max(feeder_worst, (model.X * q + rho - v).lpNorm<Eigen::Infinity>());
            }
        }
        worst = std::max(worst, feeder_worst);
        detail += fmt::format("{}{} {:.2e} p.u.", detail.empty() ? "" : ", ", name, feeder_worst);
    }
    return {worst <= 0.01, "max |X q + rho - H(q, z)| " + detail};
}

Outcome multiphase_stability() {
    std::mt19937_64 rng(1313);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> size(2, 12);
    int passes = 0, pass_diverged = 0, fails = 0, fail_converged = 0, tried = 0;
    while (tried < 100) {
        const int n = size(rng);
        const Eigen::MatrixXd S = testutil::random_spd(rng, n, 0.05, 0.5);
        Eigen::MatrixXd K(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) K(i, j) = nd(rng);
        K = 0.5 * (K - K.transpose());
        K *= 0.15 * u(rng) / std::max(1e-12, K.norm());
        const Eigen::MatrixXd X = S + K;
        ++tried;
        const double norm2 = Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues()(0);
        const double eta = 0.1 + 0.8 * u(rng);
        const double t = 2.0 * u(rng);
        const Gains g{eta, t * eta / (1.0 - eta)};
        const bool pass = stability_check_multiphase(g, norm2);
        Eigen::VectorXd rho(n);
        for (int i = 0; i < n; ++i) rho(i) = 0.97 + 0.08 * u(rng);
        // Direct iteration of the linear loop.
        const Eigen::MatrixXd A = (1.0 - (1.0 - eta) * g.alpha) * Eigen::MatrixXd::Identity(n, n) - eta * X;
        const Eigen::VectorXd b = eta * (Eigen::VectorXd::Ones(n) - rho);
        Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
        bool converged = false;
        for (int k = 0; k < 100000 && q.lpNorm<Eigen::Infinity>() < 1e6; ++k) {
            const Eigen::VectorXd next = A * q + b;
            const double change = (next - q).lpNorm<Eigen::Infinity>();
            q = next;
            if (change < 1e-12) {
                converged = true;
                break;
            }
        }
        if (pass) {
            ++passes;
            if (!converged) ++pass_diverged;
        } else {
            ++fails;
            if (converged) ++fail_converged;
        }
    }
    return {pass_diverged == 0 && passes > 0,
            fmt::format("{} pass (all converge: {}), {} fail ({} of those still converge)", passes,
                        pass_diverged == 0 ? "yes" : "no", fails, fail_converged)};
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, fmt::format("threw: {}", e.what())};
        }
        fmt::print("[{}] {:2d} {}: {}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    };

    report(1, "equilibrium fixed point", equilibrium_fixed_point);
    report(2, "stability classifier", stability_classifier);
    report(3, "gradient oracle", gradient_oracle);
    report(4, "majorization", majorization);
    report(5, "CVaR conservativeness", cvar_conservativeness);
    report(6, "SCA convergence", sca_convergence);

    std::optional<DayResults> day;
    std::string day_error;
    try {
        day = run_day();
    } catch (const std::exception& e) {
        day_error = e.what();
    }
    auto with_day = [&](Outcome (*f)(const DayResults&)) {
        return [&, f]() -> Outcome {
            if (!day) return {false, "day run failed: " + day_error};
            return f(*day);
        };
    };
    report(7, "epsilon consistency", with_day(epsilon_consistency));
    report(8, "baseline ordering", with_day(baseline_ordering));
    report(9, "violation durations", with_day(violation_durations));
    report(10, "protection state machine", protection_examples);
    report(11, "degenerate design equivalence", degenerate_design);
    report(12, "LinDistFlow fidelity", lindistflow_fidelity);
    report(13, "multi-phase stability", multiphase_stability);

    fmt::print("{} of 13 criteria passed\n", 13 - failed);
    return failed == 0 ? 0 : 1;
}
