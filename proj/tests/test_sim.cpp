#include "dvpp/config.hpp"
#include "dvpp/sim.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dvpp;

namespace {

Config load(const char* name) { return load_config(std::string(DVPP_CONFIG_DIR) + "/" + name); }

struct Case {
    Config cfg;
    FleetDesign d;
};

const Case& case1() {
    static const Case c = [] {
        Config cfg = load("case1.json");
        FleetDesign d = design_fleet(cfg.fleet);
        return Case{std::move(cfg), std::move(d)};
    }();
    return c;
}

const Case& case2() {
    static const Case c = [] {
        Config cfg = load("case2.json");
        FleetDesign d = design_fleet(cfg.fleet);
        return Case{std::move(cfg), std::move(d)};
    }();
    return c;
}

int device_index(const FleetDesign& d, const std::string& id) { return d.spec.device_index(id); }

const DeviceDesign& device(const FleetDesign& d, const std::string& id) {
    for (const auto& dd : d.devices)
        if (dd.device == device_index(d, id)) return dd;
    throw std::runtime_error("no device " + id);
}

Scenario open_loop_step(double df, double horizon, double dt = 1e-3) {
    Scenario sc;
    sc.dt = dt;
    sc.horizon = horizon;
    sc.steps.push_back({SignalKind::df, 0.0, df});
    return sc;
}

}  // namespace

TEST(Simulate, ZeroDisturbanceStaysAtRest) {
    for (const Case* c : {&case1(), &case2()}) {
        Scenario sc;
        sc.horizon = 2.0;
        sc.grid.enabled = true;
        const SimTrace tr = simulate(c->d, sc);
        EXPECT_EQ(tr.dp.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(tr.dq.cwiseAbs().maxCoeff(), 0.0);
        for (double v : tr.df) EXPECT_EQ(v, 0.0);
    }
}

TEST(Simulate, AggregateIsSumOfDevicesAndErrorIsDeviation) {
    Scenario sc = case2().cfg.scenario("load_step");
    sc.horizon = 4.0;
    const SimTrace tr = simulate(case2().d, sc);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        EXPECT_NEAR(tr.dp_agg[k], tr.dp.row(r).sum(), 1e-12);
        EXPECT_NEAR(tr.dq_agg[k], tr.dq.row(r).sum(), 1e-12);
        for (Eigen::Index i = 0; i < tr.dp.cols(); ++i) EXPECT_NEAR(tr.eps(r, i), tr.dp(r, i) - tr.dp_ref(r, i), 1e-15);
    }
}

TEST(Simulate, FrozenResponseMatchesClosedLoopStep) {
    // Device output = reference output + matching error; both have closed-form
    // step responses at frozen parameters.
    const FleetDesign& d = case1().d;
    const double df = -0.01;
    const SimTrace tr = simulate(d, open_loop_step(df, 3.0));
    const RationalTF T = d.spec.desired[0]->tf();
    for (const char* id : {"bess", "sc"}) {
        const DeviceDesign& dd = device(d, id);
        const int i = device_index(d, id);
        const VectorXd th = VectorXd(0);
        const StateSpace ref = tf_to_ss(dd.adpm[0].at(th) * T);
        const StateSpace cl = closed_loop(dd.aug, gain_at(dd.ctrl, th), th);
        std::vector<double> ts;
        std::vector<std::size_t> ks;
        for (std::size_t k = 0; k < tr.size(); k += 97) {
            ts.push_back(tr.t[k]);
            ks.push_back(k);
        }
        const auto yr = step_response(ref, ts);
        const auto ye = step_response(cl, ts, 0, d.spec.channel_input(ChannelKind::fp));
        for (std::size_t j = 0; j < ts.size(); ++j) {
            const auto r = static_cast<Eigen::Index>(ks[j]);
            EXPECT_NEAR(tr.dp_ref(r, i), df * yr[j], 1e-9) << id << " t=" << ts[j];
            EXPECT_NEAR(tr.eps(r, i), df * ye[j], 1e-9) << id << " t=" << ts[j];
        }
    }
}

TEST(Simulate, CaseOneSteadyStateFollowsDcShares) {
    const FleetDesign& d = case1().d;
    const double df = -0.01;
    const SimTrace tr = simulate(d, open_loop_step(df, 600.0, 1e-2));
    const double target = d.spec.desired[0]->tf().dc_gain() * df;
    const auto last = static_cast<Eigen::Index>(tr.size() - 1);
    EXPECT_NEAR(tr.dp(last, device_index(d, "hydro")), target, 1e-3 * std::abs(target));
    EXPECT_NEAR(tr.dp(last, device_index(d, "bess")), 0.0, 1e-3 * std::abs(target));
    EXPECT_NEAR(tr.dp(last, device_index(d, "sc")), 0.0, 1e-3 * std::abs(target));
    EXPECT_NEAR(tr.dp_agg.back(), target, 1e-3 * std::abs(target));
}

TEST(Simulate, CaseTwoSteadyStateFollowsParameters) {
    const FleetDesign& d = case2().d;
    const SimTrace tr = simulate(d, case2().cfg.scenario("freq_step"));
    const double kp = d.spec.desired[0]->tf().dc_gain() * -0.01, kq = d.spec.desired[1]->tf().dc_gain() * -0.01;
    const auto last = static_cast<Eigen::Index>(tr.size() - 1);
    for (const auto& s : d.slots) {
        const double want = (s.channel == ChannelKind::fp ? kp : kq) * s.nominal;
        const double got = s.channel == ChannelKind::fp ? tr.dp(last, s.device) : tr.dq(last, s.device);
        EXPECT_NEAR(got, want, 1e-3 * std::abs(want)) << s.name;
    }
    EXPECT_NEAR(tr.dp_agg.back(), kp, 1e-3 * std::abs(kp));
    EXPECT_NEAR(tr.dq_agg.back(), kq, 1e-3 * std::abs(kq));
}

TEST(Simulate, RungeKuttaAgreesWithExactHold) {
    Scenario sc = open_loop_step(-0.01, 1.0);
    const SimTrace a = simulate(case1().d, sc);
    sc.integrator = Integrator::rk4;
    sc.rk4_substeps = 64;
    const SimTrace b = simulate(case1().d, sc);
    EXPECT_LE((a.dp - b.dp).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Simulate, GridSurrogateDroopSteadyState) {
    const FleetDesign& d = case1().d;
    Scenario sc = case1().cfg.scenario("load_step");
    sc.dt = 5e-3;
    sc.horizon = 600.0;
    const SimTrace tr = simulate(d, sc);
    const double D = -d.spec.desired[0]->tf().dc_gain();
    const double want = -0.12 / (sc.grid.D_load + D);
    EXPECT_NEAR(tr.df.back(), want, 1e-3 * std::abs(want));
}

TEST(Simulate, InitialRateOfChangeScalesWithInertia) {
    const FleetDesign& d = case1().d;
    Scenario sc = case1().cfg.scenario("load_step");
    sc.horizon = 1.01;
    auto first_step = [&](double H) {
        sc.grid.H = H;
        const SimTrace tr = simulate(d, sc);
        const auto k = static_cast<std::size_t>(std::lround(1.0 / sc.dt));
        // Devices are still at rest, so the first step is the exact swing response.
        const double a = -sc.grid.D_load / (2.0 * H), u = -0.12 / (2.0 * H);
        EXPECT_NEAR(tr.df[k + 1], u * (std::exp(a * sc.dt) - 1.0) / a, 1e-14);
        return (tr.df[k + 1] - tr.df[k]) / sc.dt;
    };
    const double r4 = first_step(4.0), r8 = first_step(8.0);
    EXPECT_NEAR(r8 / r4, 0.5, 1e-4);
}

TEST(Simulate, CentralizedReallocationKeepsUnitDcSum) {
    const SimTrace tr = simulate(case2().d, case2().cfg.scenario("pv_drop"));
    for (double s : tr.fp_dc_sum) EXPECT_NEAR(s, 1.0, 1e-12);
    const auto it = std::find(tr.params.begin(), tr.params.end(), "pv_fp");
    ASSERT_NE(it, tr.params.end());
    const auto pv = static_cast<Eigen::Index>(it - tr.params.begin());
    const auto last = static_cast<Eigen::Index>(tr.size() - 1);
    EXPECT_LT(tr.theta(last, pv), tr.theta(0, pv));
}

TEST(Simulate, ConsensusReachesCentralizedAllocation) {
    const SimTrace a = simulate(case2().d, case2().cfg.scenario("pv_drop"));
    const SimTrace b = simulate(case2().d, case2().cfg.scenario("pv_drop_consensus"));
    const auto last = static_cast<Eigen::Index>(a.size() - 1);
    EXPECT_LE((a.theta.row(last) - b.theta.row(last)).cwiseAbs().maxCoeff(), 1e-4);
    for (double s : b.fp_dc_sum) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Simulate, ParameterLeavingBoxIsReported) {
    Scenario sc = case2().cfg.scenario("pv_drop_consensus");
    sc.graph = {{0, 1}, {1, 2}};
    try {
        simulate(case2().d, sc);
        FAIL() << "expected a box exit";
    } catch (const SimulationError& e) {
        EXPECT_NE(std::string(e.what()).find("device wind: parameter wind_vq left its box"), std::string::npos)
            << e.what();
    }
}

TEST(Simulate, DivergenceIsReported) {
    FleetDesign d = case1().d;
    for (auto& dd : d.devices)
        for (auto& K : dd.ctrl.K) K = -K * 50.0;
    try {
        simulate(d, open_loop_step(-0.01, 20.0));
        FAIL() << "expected divergence";
    } catch (const SimulationError& e) {
        EXPECT_NE(std::string(e.what()).find("closed loop diverged"), std::string::npos) << e.what();
    }
}

TEST(Metrics, FirstOrderResponse) {
    SimTrace tr;
    const double dt = 1e-3, tau = 1.0;
    for (int k = 0; k <= 10000; ++k) {
        tr.t.push_back(k * dt);
        tr.dp_agg.push_back(1.0 - std::exp(-k * dt / tau));
        tr.df.push_back(-(1.0 - std::exp(-k * dt / tau)));
    }
    tr.eps = tr.dp_ref = MatrixXd::Zero(static_cast<Eigen::Index>(tr.size()), 1);
    const Metrics m = metrics(tr, false);
    const double final = tr.dp_agg.back();
    EXPECT_NEAR(m.settling_time, -tau * std::log(0.02 * final + std::exp(-10.0)), 2 * dt);
    EXPECT_TRUE(m.settled);
    EXPECT_DOUBLE_EQ(m.nadir, 0.0);
    EXPECT_DOUBLE_EQ(m.steady_state_deviation, final);
    EXPECT_NEAR(m.rms_aggregate_error, std::sqrt(std::inner_product(tr.dp_agg.begin(), tr.dp_agg.end(),
                                                                    tr.dp_agg.begin(), 0.0) /
                                                 static_cast<double>(tr.size())),
                1e-15);
    const Metrics mf = metrics(tr, true);
    EXPECT_DOUBLE_EQ(mf.nadir, -final);
}

TEST(Metrics, RampIsNotSettled) {
    SimTrace tr;
    for (int k = 0; k <= 100; ++k) {
        tr.t.push_back(k * 0.1);
        tr.dp_agg.push_back(k * 0.1);
    }
    tr.eps = tr.dp_ref = MatrixXd::Zero(101, 1);
    EXPECT_FALSE(metrics(tr, false).settled);
}
