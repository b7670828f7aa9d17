#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "vvc/errors.hpp"
#include "vvc/sensitivity.hpp"
#include "vvc/simkit.hpp"
#include "vvc/synth.hpp"

using namespace vvc;

namespace {

struct Rig {
    Network net;
    DerFleet fleet;
    ForecastSeries forecast;
};

Rig feeder8() {
    const auto f = make_feeder8();
    Rig r;
    r.net = Network(f.lines, f.config.slack_voltage, f.config.base_kva, f.config.base_kv);
    std::vector<Der> ders = f.ders;
    for (auto& d : ders) {
        d.s_rated /= f.config.base_kva;
        d.q_min /= f.config.base_kva;
        d.q_max /= f.config.base_kva;
    }
    r.fleet = DerFleet(ders, r.net.node_count());
    r.forecast = f.forecast;
    return r;
}

// Constant profile built from one forecast interval.
Profiles constant_profile(const Injections& z, long long seconds) {
    auto p = Profiles::zeros(z.size(), seconds);
    for (long long t = 0; t < seconds; ++t) {
        p.p_av.col(t) = z.p_av;
        p.p_l.col(t) = z.p_l;
        p.q_l.col(t) = z.q_l;
    }
    return p;
}

UncertaintyModel default_model(std::uint64_t seed) {
    UncertaintyModel m;
    m.seed = seed;
    return m;
}

Profiles noon_hour(const Rig& r, std::uint64_t seed) {
    ForecastSeries hour = r.forecast.slice(24, 2);
    return synthesize_profiles(hour, default_model(seed), 0.98);
}

}  // namespace

TEST_CASE("instant trip above 1.06 p.u.") {
    for (double tau : {0.1, 1.0}) {
        const auto s = protection_step({}, 1.07, tau);
        CHECK_FALSE(s.connected);
        CHECK(protection_step({}, 1.06, tau).connected);
    }
}

TEST_CASE("ten minutes above 1.05 p.u. trips on the last step") {
    for (double tau : {0.1, 1.0}) {
        const long long n = std::llround(600.0 / tau);
        ProtectionState s;
        for (long long k = 1; k < n; ++k) {
            s = protection_step(s, 1.055, tau);
            REQUIRE(s.connected);
        }
        s = protection_step(s, 1.055, tau);
        CHECK_FALSE(s.connected);
    }
}

TEST_CASE("one minute below 1.05 p.u. reconnects") {
    for (double tau : {0.1, 1.0}) {
        const long long n = std::llround(60.0 / tau);
        ProtectionState s{false, 0, 0};
        for (long long k = 1; k < n; ++k) {
            s = protection_step(s, 1.04, tau);
            REQUIRE_FALSE(s.connected);
        }
        s = protection_step(s, 1.04, tau);
        CHECK(s.connected);
    }
}

TEST_CASE("protection counters reset when the condition breaks") {
    const double tau = 1.0;
    ProtectionState s;
    for (int k = 0; k < 599; ++k) s = protection_step(s, 1.055, tau);
    s = protection_step(s, 1.04, tau);
    CHECK(s.over_steps == 0);
    for (int k = 0; k < 599; ++k) s = protection_step(s, 1.055, tau);
    CHECK(s.connected);

    ProtectionState off{false, 0, 0};
    for (int k = 0; k < 59; ++k) off = protection_step(off, 1.04, tau);
    off = protection_step(off, 1.052, tau);
    for (int k = 0; k < 59; ++k) off = protection_step(off, 1.04, tau);
    CHECK_FALSE(off.connected);
}

TEST_CASE("static volt/var curve examples") {
    const double s = 0.5;
    CHECK(static_voltvar(1.00, 0.0, s) == 0.0);
    CHECK(static_voltvar(1.05, 0.0, s) == doctest::Approx(-0.44 * s));
    CHECK(static_voltvar(1.03, 0.0, s) == doctest::Approx(-0.22 * s));
    CHECK(static_voltvar(0.95, 0.0, s) == doctest::Approx(0.44 * s));
    CHECK(static_voltvar(1.10, 0.0, s) == doctest::Approx(-0.44 * s));
    // Active priority shrinks the cap.
    CHECK(static_voltvar(1.05, 0.95, 1.0) == doctest::Approx(-std::sqrt(1.0 - 0.95 * 0.95)));
    double prev = static_voltvar(0.90, 0.2, s);
    for (double v = 0.90; v <= 1.10; v += 0.001) {
        const double q = static_voltvar(v, 0.2, s);
        CHECK(q <= prev + 1e-15);
        prev = q;
    }
}

TEST_CASE("violation runs are counted per network-wide episode") {
    SimTrace tr;
    tr.tau = 1.0;
    for (int k = 0; k < 25; ++k) {
        const bool bad = (k >= 5 && k <= 7) || k == 20;
        tr.v_max.push_back(bad ? 1.06 : 1.0);
        tr.v_min.push_back(1.0);
        for (auto* v : {&tr.line_loss, &tr.curtailment, &tr.reactive, &tr.der_power, &tr.load_power,
                        &tr.slack_power, &tr.other_generation}) {
            v->push_back(0.0);
        }
        tr.pf_failed.push_back(0);
    }
    const auto m = compute_metrics(tr, 0.95, 1.05);
    CHECK(m.gamma_v == std::vector<long long>{3, 1});
    CHECK(m.violation_fraction == doctest::Approx(4.0 / 25.0));
    CHECK(m.line_loss_kwh == 0.0);

    const auto clean = compute_metrics(SimTrace{}, 0.95, 1.05);
    CHECK(clean.gamma_v.empty());
    CHECK(clean.gamma_quantile_s(0.95) == 0.0);
}

TEST_CASE("quantile tables are non-decreasing and weighted tables agree for equal weights") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.9, 1.1);
    std::vector<double> v(537);
    for (auto& x : v) x = u(rng);
    const auto a = quantile_table(v, 101);
    const auto b = weighted_quantile_table(v, std::vector<double>(v.size(), 0.1), 101);
    REQUIRE(a.size() == 101u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].value == b[i].value);
        if (i > 0) CHECK(a[i].value >= a[i - 1].value);
    }
    CHECK(a.front().value == *std::min_element(v.begin(), v.end()));
    CHECK(a.back().value == *std::max_element(v.begin(), v.end()));
}

TEST_CASE("zero profiles keep the feeder at the slack voltage") {
    const auto r = feeder8();
    const auto profiles = Profiles::zeros(r.net.node_count(), 30);
    SimOptions opt;
    opt.record_window = 1;
    const GainsSchedule gains{{0.0, {0.6, 2.0}}};
    for (auto s : {Strategy::OGD, Strategy::VoltVar, Strategy::OnOff}) {
        const auto tr = run_simulation(r.net, r.fleet, profiles, s, gains, opt);
        CHECK(tr.steps() == 300);
        for (const auto& snap : tr.snapshots) {
            CHECK((snap.v.array() - 1.0).abs().maxCoeff() <= 1e-12);
            CHECK(snap.q.cwiseAbs().maxCoeff() == 0.0);
        }
        const auto m = compute_metrics(tr, 0.95, 1.05);
        CHECK(m.line_loss_kwh == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(m.reactive_kvarh == 0.0);
        CHECK(m.curtailment_kwh == 0.0);
        CHECK(m.gamma_v.empty());
    }
}

TEST_CASE("capability, protection safety and energy balance hold on a noon hour") {
    const auto r = feeder8();
    const auto profiles = noon_hour(r, 5);
    SimOptions opt;
    opt.duration_s = 900.0;
    const GainsSchedule gains{{0.0, {0.83, 1.73}}};
    for (auto s : {Strategy::OGD, Strategy::VoltVar, Strategy::OnOff}) {
        CAPTURE(strategy_name(s));
        const auto tr = run_simulation(r.net, r.fleet, profiles, s, gains, opt);
        CHECK(tr.capability_excess <= 1e-12);
        CHECK(tr.protection_breaches == 0);
        CHECK(tr.pf_failures == 0);
        const auto m = compute_metrics(tr, 0.95, 1.05);
        CHECK(m.balance_error <= 1e-3);
        CHECK(m.line_loss_kwh >= 0.0);
        CHECK(m.curtailment_kwh >= -1e-12);
        if (s == Strategy::OnOff) CHECK(tr.max_abs_q == 0.0);
    }
}

TEST_CASE("OGD settles at the linear-loop limit on a constant profile") {
    const auto r = feeder8();
    const auto z = r.forecast.mean[25];
    const auto profiles = constant_profile(z, 120);
    const Gains g{0.8, 1.8};
    SimOptions opt;
    opt.protection = false;
    opt.record_window = 1;
    const auto tr = run_simulation(r.net, r.fleet, profiles, Strategy::OGD, {{0.0, g}}, opt);

    const auto model = reduce_to_der_nodes(build_x_lindistflow(r.net), r.fleet);
    const auto rho_full = compute_rho(r.net, z.state());
    Eigen::VectorXd rho(model.size());
    for (int i = 0; i < model.size(); ++i) rho(i) = rho_full(model.nodes[i]);
    const auto lin = simulate_linear_loop(g, model.X, rho, Eigen::VectorXd::Zero(model.size()), 1000);
    REQUIRE_FALSE(lin.diverged);
    const Eigen::VectorXd q_lin = lin.q.back().cwiseMax(r.fleet.q_min()).cwiseMin(r.fleet.q_max());

    const auto& last = tr.snapshots.back();
    const auto nodes = r.fleet.node_indices();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        CHECK(std::abs(last.q(nodes[k]) - q_lin(static_cast<Eigen::Index>(k))) <= 0.005);
    }
}

TEST_CASE("a gain switch settles within ten seconds") {
    const auto r = feeder8();
    const auto profiles = constant_profile(r.forecast.mean[25], 120);
    SimOptions opt;
    opt.protection = false;
    opt.record_window = 1;
    const GainsSchedule gains{{0.0, {0.65, 2.74}}, {60.0, {0.85, 1.75}}};
    const auto tr = run_simulation(r.net, r.fleet, profiles, Strategy::OGD, gains, opt);
    const auto& final_q = tr.snapshots.back().q;
    double settled_at = 0.0;
    for (const auto& s : tr.snapshots) {
        if (s.t < 60.0) continue;
        if ((s.q - final_q).cwiseAbs().maxCoeff() > 1e-3) settled_at = s.t;
    }
    CHECK(settled_at - 60.0 <= 10.0);
    // The switch does move the setpoints.
    const auto before = std::find_if(tr.snapshots.begin(), tr.snapshots.end(), [](const auto& s) { return s.t >= 59.9; });
    REQUIRE(before != tr.snapshots.end());
    CHECK((before->q - final_q).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("decimated traces reproduce the full voltage distribution") {
    const auto r = feeder8();
    const auto profiles = noon_hour(r, 11);
    SimOptions opt;
    opt.duration_s = 600.0;
    opt.record_window = 1;
    const auto full = run_simulation(r.net, r.fleet, profiles, Strategy::OnOff, {}, opt);
    opt.record_window = 50;
    const auto dec = run_simulation(r.net, r.fleet, profiles, Strategy::OnOff, {}, opt);
    CHECK(dec.snapshots.size() < full.snapshots.size() / 4);

    const auto dir = testutil::scratch_dir("decimate");
    write_trace(dir / "full.csv", full);
    write_trace(dir / "dec.csv", dec);
    const auto a = summarize_trace(read_trace(dir / "full.csv"), 0.95, 1.05, 100.0);
    const auto b = summarize_trace(read_trace(dir / "dec.csv"), 0.95, 1.05, 100.0);
    const auto m = compute_metrics(full, 0.95, 1.05);
    REQUIRE(a.v_max_cdf.size() == b.v_max_cdf.size());
    for (std::size_t i = 0; i < a.v_max_cdf.size(); ++i) {
        CHECK(std::abs(a.v_max_cdf[i].value - m.v_max_cdf[i].value) <= 1e-12);
        CHECK(std::abs(a.v_max_cdf[i].value - b.v_max_cdf[i].value) <= 1e-3);
        CHECK(std::abs(a.v_min_cdf[i].value - b.v_min_cdf[i].value) <= 1e-3);
    }
    CHECK(a.v_max_cdf.back().value == b.v_max_cdf.back().value);
    CHECK(a.v_min_cdf.front().value == b.v_min_cdf.front().value);
}

TEST_CASE("profiles round trip and reject gaps") {
    const auto dir = testutil::scratch_dir("profiles");
    auto p = Profiles::zeros(2, 3);
    p.p_av(1, 2) = 0.25;
    p.q_l(0, 1) = 0.0123456789;
    write_profiles(dir / "p.csv", p);
    const auto back = load_profiles(dir / "p.csv", 2);
    CHECK(back.p_av == p.p_av);
    CHECK(back.q_l == p.q_l);
    testutil::write_file(dir / "gap.csv", "t_seconds,node,p_av_pu,p_l_pu,q_l_pu\n0,1,0,0,0\n0,2,0,0,0\n2,1,0,0,0\n2,2,0,0,0\n");
    CHECK_THROWS_AS(load_profiles(dir / "gap.csv", 2), SchemaError);
    CHECK_THROWS_AS(load_profiles(dir / "missing.csv", 2), ParseError);
}

TEST_CASE("synthesized profiles are seeded and collapse to the forecast without spread") {
    const auto r = feeder8();
    const auto hour = r.forecast.slice(24, 2);
    const auto a = synthesize_profiles(hour, default_model(3), 0.9);
    const auto b = synthesize_profiles(hour, default_model(3), 0.9);
    CHECK(a.p_av == b.p_av);
    CHECK(a.seconds() == 3600);
    UncertaintyModel flat;
    flat.sigma_pv = flat.sigma_load = 0.0;
    const auto c = synthesize_profiles(hour, flat, 0.9);
    CHECK(c.p_av.col(0) == hour.mean[0].p_av);
    CHECK(c.p_l.col(2000) == hour.mean[1].p_l);
    CHECK((a.p_av.array() >= 0.0).all());
}

TEST_CASE("gains schedules select by start time and validate") {
    const GainsSchedule s{{0.0, {0.5, 1.0}}, {3600.0, {0.8, 2.0}}};
    CHECK(gains_at(s, 10.0).eta == 0.5);
    CHECK(gains_at(s, 3600.0).eta == 0.8);
    CHECK(gains_at(s, 90000.0).alpha == 2.0);
    CHECK_THROWS_AS(validate_schedule({{0.0, {0.5, 1.0}}, {0.0, {0.5, 1.0}}}), ConfigError);
    CHECK_THROWS_AS(validate_schedule({{0.0, {0.0, 1.0}}}), ConfigError);

    const auto dir = testutil::scratch_dir("gains");
    write_gains_schedule(dir / "g.json", s);
    const auto back = load_gains_schedule(dir / "g.json");
    REQUIRE(back.size() == 2u);
    CHECK(back[1].start_s == 3600.0);
    CHECK(back[1].gains.alpha == 2.0);
}

TEST_CASE("linear plant mode follows X q + rho") {
    const Network net({{0, 1, 0.01, 0.1}});
    const DerFleet fleet({{1, 1, 1.0, -0.5, 0.5}}, 1);
    auto profiles = Profiles::zeros(1, 5);
    SimOptions opt;
    opt.tau = 1.0;
    opt.protection = false;
    opt.record_window = 1;
    LinearPlant plant;
    plant.X = Eigen::MatrixXd::Constant(1, 1, 0.1);
    plant.rho = Eigen::MatrixXd::Constant(1, 5, 1.02);
    opt.linear = plant;
    const Gains g{0.5, 1.0};
    const auto tr = run_simulation(net, fleet, profiles, Strategy::OGD, {{0.0, g}}, opt);
    CHECK(tr.linear_model);
    const auto lin = simulate_linear_loop(g, plant.X, Eigen::VectorXd::Constant(1, 1.02), Eigen::VectorXd::Zero(1), 5);
    for (int k = 0; k < 5; ++k) CHECK(tr.snapshots[k].q(0) == doctest::Approx(lin.q[k + 1](0)).epsilon(1e-12));
}
