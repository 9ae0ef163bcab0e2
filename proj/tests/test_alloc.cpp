#include "dvpp/alloc.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dvpp;

namespace {

CommGraph random_connected_graph(std::mt19937& rng, int n) {
    CommGraph g;
    g.n = n;
    // Random spanning tree plus extra edges.
    for (int i = 1; i < n; ++i) g.edges.emplace_back(std::uniform_int_distribution<int>(0, i - 1)(rng), i);
    std::bernoulli_distribution extra(0.3);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            bool present = false;
            for (auto [x, y] : g.edges) present = present || (x == a && y == b) || (x == b && y == a);
            if (!present && extra(rng)) g.edges.emplace_back(a, b);
        }
    return g;
}

}  // namespace

TEST(Allocate, TableCapacities) {
    VectorXd y(2);
    y << 37.0, 28.0;
    const VectorXd th = allocate(y);
    EXPECT_NEAR(th(0), 0.56923, 1e-5);
    EXPECT_NEAR(th(1), 0.43077, 1e-5);
}

TEST(Allocate, MatchesQuadraticProgramOracle) {
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> cap(0.0, 100.0), fdc(0.0, 0.9);
    std::uniform_int_distribution<int> dim(1, 5);
    for (int k = 0; k < 100; ++k) {
        VectorXd y(dim(rng));
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = cap(rng);
        if (k % 7 == 0 && y.size() > 1) y(0) = 0.0;
        const double f = k % 2 ? fdc(rng) : 0.0;
        const VectorXd a = allocate(y, f), q = qp_oracle(y, f);
        EXPECT_LE((a - q).cwiseAbs().maxCoeff(), 1e-8) << k;
        EXPECT_NEAR(a.sum(), 1.0 - f, 1e-14);
    }
}

TEST(Allocate, ZeroCapacityCases) {
    VectorXd y = VectorXd::Zero(3);
    EXPECT_THROW(allocate(y), Error);
    EXPECT_TRUE(allocate(y, 1.0).isZero(0.0));
    y << -1.0, 2.0, 3.0;
    EXPECT_THROW(allocate(y), Error);
}

TEST(Allocate, BoundsCoverEveryAllocation) {
    VectorXd lo(3), hi(3);
    lo << 0.0, 10.0, 80.0;
    hi << 37.0, 28.0, 80.0;
    const auto [blo, bhi] = allocation_bounds(lo, hi, 0.2);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        VectorXd y(3);
        for (int i = 0; i < 3; ++i) y(i) = lo(i) + u(rng) * (hi(i) - lo(i));
        const VectorXd a = allocate(y, 0.2);
        for (int i = 0; i < 3; ++i) {
            EXPECT_GE(a(i), blo(i) - 1e-15);
            EXPECT_LE(a(i), bhi(i) + 1e-15);
        }
    }
    // Ends are attained at the interval corners.
    EXPECT_NEAR(blo(0), 0.0, 1e-15);
    EXPECT_NEAR(bhi(2), allocate((VectorXd(3) << 0.0, 10.0, 80.0).finished(), 0.2)(2), 1e-15);
    EXPECT_NEAR(blo(1), allocate((VectorXd(3) << 37.0, 10.0, 80.0).finished(), 0.2)(1), 1e-15);
}

TEST(Consensus, ConservesSumAndReachesAllocation) {
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> cap(0.2, 2.0);
    for (int k = 0; k < 20; ++k) {
        const int n = 2 + k % 7;
        const CommGraph g = random_connected_graph(rng, n);
        VectorXd y0(n), y1(n);
        for (int i = 0; i < n; ++i) {
            y0(i) = cap(rng);
            y1(i) = cap(rng);
        }
        const double fixed = k % 3 == 0 ? 0.4 : 0.0;
        CapacityProfile prof{{0.0, 1.0}, {y0, y1}};
        const ConsensusTrace tr = consensus_simulate(g, prof, allocate(y0, fixed), 1e-3, 400.0, fixed);
        for (std::size_t s = 1; s < tr.theta.size(); ++s)
            ASSERT_NEAR(tr.theta[s].sum(), tr.theta[s - 1].sum(), 1e-12) << k;
        EXPECT_LE((tr.theta.back() - allocate(y1, fixed)).cwiseAbs().maxCoeff(), 1e-6) << k;
    }
}

TEST(Consensus, InitialAllocationIsAFixedPoint) {
    CommGraph g{3, {{0, 1}, {1, 2}}};
    VectorXd y(3);
    y << 1.0, 2.0, 3.0;
    ConsensusFilter f(g, 1e-3);
    VectorXd th = allocate(y);
    f.set_capacity(y, th);
    const VectorXd before = th;
    for (int k = 0; k < 100; ++k) f.step(th);
    EXPECT_LE((th - before).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Consensus, DisconnectedGraphRejected) {
    CommGraph g{4, {{0, 1}, {2, 3}}};
    EXPECT_FALSE(g.connected());
    try {
        ConsensusFilter f(g, 1e-3);
        FAIL() << "expected rejection";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("consensus cannot reach allocation"), std::string::npos);
    }
}

TEST(Consensus, StepAboveBoundRejected) {
    CommGraph g{2, {{0, 1}}};
    VectorXd y(2);
    y << 0.01, 1.0;
    ConsensusFilter f(g, 0.05);
    VectorXd th = allocate(y);
    EXPECT_THROW(f.set_capacity(y, th), Error);
}

TEST(Consensus, ZeroCapacityNodeRelaysShares) {
    // Node 1 loses all capacity; its neighbours absorb its share and keep
    // exchanging ratios through it.
    CommGraph g{3, {{0, 1}, {1, 2}}};
    VectorXd y0(3), y1(3);
    y0 << 1.0, 1.0, 2.0;
    y1 << 1.0, 0.0, 3.0;
    CapacityProfile prof{{0.0, 0.5}, {y0, y1}};
    const ConsensusTrace tr = consensus_simulate(g, prof, allocate(y0), 1e-3, 40.0);
    EXPECT_DOUBLE_EQ(tr.theta.back()(1), 0.0);
    EXPECT_NEAR(tr.theta.back().sum(), 1.0, 1e-12);
    EXPECT_LE((tr.theta.back() - allocate(y1)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Consensus, RejectsInitialSumMismatch) {
    CommGraph g{2, {{0, 1}}};
    VectorXd y(2);
    y << 1.0, 1.0;
    CapacityProfile prof{{0.0}, {y}};
    EXPECT_THROW(consensus_simulate(g, prof, VectorXd::Constant(2, 0.3), 1e-3, 1.0), Error);
}
