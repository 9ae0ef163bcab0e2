#include "dvpp/adpf.hpp"
#include "dvpp/config.hpp"
#include "dvpp/fleet.hpp"
#include "dvpp/verify.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dvpp;

namespace {

const RationalTF kTdes1 = DesiredBehavior{BehaviorKind::droop, 1.0 / 0.03, 0.0, 0.2}.tf();

std::vector<ChannelMember> case1_members() {
    return {{"hydro", ParticipationKind::fixed, 0.0, 1, -1, hydro_model({0.03, 0.38, 0.2, 5.0, 1.0})},
            {"bess", ParticipationKind::bpf, 0.2, 1, -1, {}},
            {"sc", ParticipationKind::hpf, 0.01, 1, -1, {}}};
}

Config load(const char* name) { return load_config(std::string(DVPP_CONFIG_DIR) + "/" + name); }

}  // namespace

TEST(SortAlgorithm, CaseOneSumsToRollOff) {
    for (double tau_c : {0.081, 0.0}) {
        const auto ch = sort_algorithm(case1_members(), tau_c, kTdes1, 0);
        EXPECT_LE(participation_residual(ch, VectorXd(0), tau_c, FreqGrid::logspace()), 1e-12) << tau_c;
    }
}

TEST(SortAlgorithm, BandAndHighPassCarryNoDcGain) {
    const auto ch = sort_algorithm(case1_members(), 0.081, kTdes1, 0);
    EXPECT_NEAR(ch[0].dc_gain(VectorXd(0)), 1.0, 1e-12);  // hydro equals the desired droop
    EXPECT_NEAR(ch[1].dc_gain(VectorXd(0)), 0.0, 1e-12);
    EXPECT_NEAR(ch[2].dc_gain(VectorXd(0)), 0.0, 1e-12);
}

TEST(SortAlgorithm, FixedFactorMatchesDeviceOverDesired) {
    const auto ch = sort_algorithm(case1_members(), 0.081, kTdes1, 0);
    const RationalTF hydro = hydro_model({0.03, 0.38, 0.2, 5.0, 1.0});
    for (double w : {0.01, 0.3, 2.0, 40.0}) {
        const std::complex<double> s{0.0, w};
        EXPECT_NEAR(std::abs(ch[0](s, VectorXd(0)) - hydro(s) / kTdes1(s)), 0.0, 1e-12);
    }
}

TEST(SortAlgorithm, LowPassSharesFollowParameters) {
    std::vector<ChannelMember> m{{"wind", ParticipationKind::lpf, 1.5, 1, 0, {}},
                                 {"pv", ParticipationKind::lpf, 0.6, 1, 1, {}},
                                 {"st", ParticipationKind::hpf, 0.2, 1, -1, {}}};
    const auto ch = sort_algorithm(m, 0.081, kTdes1, 2);
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        VectorXd th(2);
        th << u(rng), u(rng);
        EXPECT_NEAR(ch[0].dc_gain(th), th(0), 1e-14);
        EXPECT_NEAR(ch[1].dc_gain(th), th(1), 1e-14);
        EXPECT_NEAR(ch[2].dc_gain(th), 1.0 - th.sum(), 1e-13);
        EXPECT_LE(participation_residual(ch, th, 0.081, FreqGrid::logspace()), 1e-12);
    }
}

TEST(SortAlgorithm, RejectsMissingHighPass) {
    std::vector<ChannelMember> m{{"wind", ParticipationKind::lpf, 1.5, 1, 0, {}}};
    EXPECT_THROW(sort_algorithm(m, 0.081, kTdes1, 1), Error);
}

TEST(SortAlgorithm, LowPassOnlyChannelAtRollOff) {
    std::vector<ChannelMember> m{{"a", ParticipationKind::lpf, 0.081, 1, 0, {}},
                                 {"b", ParticipationKind::lpf, 0.081, 1, 1, {}}};
    const auto ch = sort_algorithm(m, 0.081, kTdes1, 2);
    VectorXd th(2);
    th << 0.3, 0.7;
    EXPECT_LE(participation_residual(ch, th, 0.081, FreqGrid::logspace()), 1e-14);
}

TEST(SortAlgorithm, RejectsBandPassSlowerThanLowPass) {
    std::vector<ChannelMember> m{{"wind", ParticipationKind::lpf, 0.5, 1, 0, {}},
                                 {"bess", ParticipationKind::bpf, 1.0, 1, -1, {}},
                                 {"sc", ParticipationKind::hpf, 0.0, 1, -1, {}}};
    EXPECT_THROW(sort_algorithm(m, 0.081, kTdes1, 1), Error);
}

TEST(SortAlgorithm, RejectsTwoHighPassMembers) {
    std::vector<ChannelMember> m{{"a", ParticipationKind::hpf, 0.0, 1, -1, {}},
                                 {"b", ParticipationKind::hpf, 0.0, 1, -1, {}}};
    EXPECT_THROW(sort_algorithm(m, 0.081, kTdes1, 0), Error);
}

TEST(SortAlgorithm, BandPassDegreeSharpensRollOff) {
    auto m = case1_members();
    m[1].degree = 3;
    const auto ch = sort_algorithm(m, 0.081, kTdes1, 0);
    EXPECT_LE(participation_residual(ch, VectorXd(0), 0.081, FreqGrid::logspace()), 1e-11);
}

TEST(Participation, BundledConfigsAtSampledParameters) {
    for (const char* name : {"case1.json", "case2.json", "case3.json"}) {
        const FleetDesign d = plan_fleet(load(name).fleet);
        std::mt19937_64 rng(11);
        const FreqGrid grid = FreqGrid::logspace();
        for (int k = 0; k < 20; ++k) {
            const VectorXd th = sample_allocation(d, rng);
            for (const auto& plan : d.plans) EXPECT_LE(participation_residual(plan.adpf, th, d.tau_c, grid), 1e-9) << name;
        }
    }
}

TEST(Participation, HighPassAbsorbsAnyParameterInBox) {
    const FleetDesign d = plan_fleet(load("case2.json").fleet);
    const auto* fp = d.plan(ChannelKind::fp);
    ASSERT_NE(fp, nullptr);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        VectorXd th = d.nominal_theta();
        for (std::size_t j = 0; j < d.slots.size(); ++j)
            th(static_cast<int>(j)) = d.slots[j].lo + u(rng) * (d.slots[j].hi - d.slots[j].lo);
        EXPECT_LE(participation_residual(fp->adpf, th, d.tau_c, FreqGrid::logspace()), 1e-12);
    }
}

TEST(Participation, CaseTwoParameterBoxes) {
    const FleetDesign d = plan_fleet(load("case2.json").fleet);
    ASSERT_EQ(d.slots.size(), 5u);
    // Reactive shares from q = sqrt(S^2 - p^2) at the interval ends.
    const double qw = std::sqrt(70.5 * 70.5 - 37.0 * 37.0), qp = std::sqrt(53.0 * 53.0 - 28.0 * 28.0);
    EXPECT_NEAR(d.slots[2].lo, qw / (qw + 53.0 + 80.0), 1e-12);
    EXPECT_NEAR(d.slots[2].hi, 70.5 / (70.5 + qp + 80.0), 1e-12);
    EXPECT_NEAR(d.slots[4].hi, 80.0 / (qw + qp + 80.0), 1e-12);
    EXPECT_NEAR(d.slots[0].nominal, 37.0 / 65.0, 1e-12);
    EXPECT_DOUBLE_EQ(d.slots[0].lo, 0.0);
    EXPECT_DOUBLE_EQ(d.slots[0].hi, 1.0);
}

TEST(Participation, StaticAndFrozenVariants) {
    Config c = load("case3.json");
    c.fleet.mode = Disaggregation::spf;
    const FleetDesign spf = plan_fleet(c.fleet);
    const auto* p = spf.plan(ChannelKind::fp);
    const VectorXd th = spf.nominal_theta();
    // Hydro keeps its DC share 1/R_g / D, the remainder splits by capacity,
    // the high-pass device gets nothing.
    EXPECT_NEAR(p->adpf[0].dc_gain(th), 25.0 / 40.0, 1e-12);
    EXPECT_NEAR(p->adpf[1].dc_gain(th), 0.375 * 38.0 / 108.0, 1e-12);
    EXPECT_NEAR(p->adpf[2].dc_gain(th), 0.375 * 70.0 / 108.0, 1e-12);
    EXPECT_TRUE(p->adpf[3].terms.empty());
    for (const auto& a : p->adpf) EXPECT_FALSE(a.depends_on_theta());
    const std::complex<double> s{0.0, 3.0};
    EXPECT_NEAR(std::abs(p->adpf[1](s, th) - p->adpf[1].dc_gain(th)), 0.0, 1e-15);

    c.fleet.mode = Disaggregation::dpf;
    const FleetDesign dpf = plan_fleet(c.fleet);
    for (const auto& a : dpf.plan(ChannelKind::fp)->adpf) EXPECT_FALSE(a.depends_on_theta());
    EXPECT_LE(participation_residual(dpf.plan(ChannelKind::fp)->adpf, th, dpf.tau_c, FreqGrid::logspace()), 1e-12);
}

TEST(ReferenceModel, RealizesParticipationTimesDesired) {
    const FleetDesign d = [] {
        FleetDesign x = plan_fleet(load("case2.json").fleet);
        assemble_devices(x);
        return x;
    }();
    std::mt19937_64 rng(9);
    for (const auto& dd : d.devices) {
        for (int k = 0; k < 5; ++k) {
            const VectorXd global = sample_allocation(d, rng);
            const VectorXd local = dd.ref.box.local(global);
            const LpvMatrices M = dd.ref.at(local);
            const StateSpace ss{M.A, M.E, M.C, M.F};
            for (std::size_t c = 0; c < dd.channels.size(); ++c) {
                const RationalTF T = d.spec.desired[static_cast<std::size_t>(dd.channels[c])]->tf();
                const int in = d.spec.channel_input(dd.channels[c]);
                for (double w : {0.05, 1.0, 20.0, 300.0}) {
                    const std::complex<double> s{0.0, w};
                    MatrixXc G;
                    ASSERT_TRUE(evaluate(ss, s, G));
                    const std::complex<double> want = dd.adpm[c](s, global) * T(s);
                    EXPECT_LE(std::abs(G(static_cast<int>(c), in) - want), 1e-9 * (1.0 + std::abs(want)));
                    // The other channel does not leak into this output.
                    if (d.nw() == 2) {
                        EXPECT_LE(std::abs(G(static_cast<int>(c), 1 - in)), 1e-12);
                    }
                }
            }
        }
    }
}

TEST(ReferenceModel, RejectsParameterOutsideBox) {
    FleetDesign d = plan_fleet(load("case2.json").fleet);
    ThetaBox empty;
    empty.lo = VectorXd(0);
    empty.hi = VectorXd(0);
    const auto* fp = d.plan(ChannelKind::fp);
    EXPECT_THROW(reference_model_lpv({fp->adpf[0]}, {d.spec.desired[0]->tf()}, empty, {0}, 2), Error);
}
