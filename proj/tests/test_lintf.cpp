#include "dvpp/hinf_norm.hpp"
#include "dvpp/rational_tf.hpp"
#include "dvpp/state_space.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dvpp;

namespace {

RationalTF random_stable_tf(std::mt19937& rng, int order, bool strictly_proper) {
    std::uniform_real_distribution<double> re(-8.0, -0.05), im(0.0, 6.0), u(-2.0, 2.0);
    std::vector<std::complex<double>> poles;
    while (static_cast<int>(poles.size()) < order) {
        if (order - static_cast<int>(poles.size()) >= 2 && u(rng) > 0.0) {
            const std::complex<double> p{re(rng), im(rng)};
            poles.push_back(p);
            poles.push_back(std::conj(p));
        } else {
            poles.push_back({re(rng), 0.0});
        }
    }
    std::vector<double> num;
    const int nn = strictly_proper ? order : order + 1;
    for (int i = 0; i < nn; ++i) num.push_back(u(rng));
    return RationalTF(Polynomial(num), Polynomial::from_roots(poles, 1.0));
}

// Direct evaluation of the rational function, independent of any realization.
std::complex<double> direct(const RationalTF& g, double w) {
    const std::complex<double> s{0.0, w};
    std::complex<double> n = 0.0, d = 0.0;
    for (double c : g.num().coeffs()) n = n * s + c;
    for (double c : g.den().coeffs()) d = d * s + c;
    return n / d;
}

double dense_grid_peak(const StateSpace& ss) {
    double best = sigma_max(ss.D);
    for (int i = 0; i <= 20000; ++i) best = std::max(best, sigma_max_at(ss, std::pow(10.0, -4.0 + 8.0 * i / 20000.0)));
    best = std::max(best, sigma_max_at(ss, 0.0));
    return best;
}

}  // namespace

TEST(RationalTF, FirstOrderRealizationIsExact) {
    const StateSpace ss = tf_to_ss(RationalTF({1.0}, {0.2, 1.0}));
    ASSERT_EQ(ss.states(), 1);
    EXPECT_DOUBLE_EQ(ss.A(0, 0), -5.0);
    EXPECT_DOUBLE_EQ(ss.B(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(ss.C(0, 0), 5.0);
    EXPECT_DOUBLE_EQ(ss.D(0, 0), 0.0);
}

TEST(RationalTF, DenominatorIsMonic) {
    const RationalTF g({3.0, 1.0}, {2.0, 4.0, 6.0});
    EXPECT_DOUBLE_EQ(g.den().leading(), 1.0);
    EXPECT_NEAR(std::abs(g({0.0, 1.3}) - (3.0 * std::complex<double>(0, 1.3) + 1.0) /
                                         (2.0 * std::pow(std::complex<double>(0, 1.3), 2) + 4.0 * std::complex<double>(0, 1.3) + 6.0)),
                0.0, 1e-14);
}

TEST(RationalTF, ImproperRealizationRejected) {
    EXPECT_THROW(
        {
            try {
                tf_to_ss(RationalTF({1.0, 0.0, 1.0}, {1.0, 1.0}));
            } catch (const Error& e) {
                EXPECT_STREQ(e.what(), "improper transfer function");
                throw;
            }
        },
        Error);
}

TEST(RationalTF, InverseOfZeroIsSingular) {
    EXPECT_THROW(
        {
            try {
                RationalTF().inv();
            } catch (const Error& e) {
                EXPECT_STREQ(e.what(), "singular transfer function");
                throw;
            }
        },
        Error);
}

TEST(RationalTF, LikeDenominatorsAddWithoutGrowth) {
    const RationalTF a({0.5}, {1.0, 1.0});
    const RationalTF s = a + a;
    EXPECT_EQ(s.order(), 1);
    EXPECT_DOUBLE_EQ(s.num().coeffs()[0], 1.0);
    EXPECT_DOUBLE_EQ(s.den().coeffs()[1], 1.0);
}

TEST(RationalTF, MultiplyByOneIsIdentity) {
    const RationalTF g({-1.0, 1.0}, {0.5, 1.0});
    const RationalTF h = g * RationalTF::gain(1.0);
    EXPECT_EQ(h.num(), g.num());
    EXPECT_EQ(h.den(), g.den());
}

TEST(RationalTF, DoubleInverseRoundTrips) {
    std::mt19937 rng(7);
    for (int k = 0; k < 20; ++k) {
        const RationalTF g = random_stable_tf(rng, 3, false);
        const RationalTF h = g.inv().inv();
        for (double w : {0.01, 0.3, 2.0, 40.0}) EXPECT_NEAR(std::abs(h({0, w}) - g({0, w})), 0.0, 1e-9 * (1 + std::abs(g({0, w}))));
    }
}

TEST(RationalTF, MinimalCancelsCommonRoots) {
    const RationalTF g = RationalTF({1.0, 2.0}, {1.0, 2.0}) * RationalTF({1.0}, {1.0, 3.0});
    EXPECT_EQ(g.order(), 2);
    const RationalTF m = g.minimal();
    EXPECT_EQ(m.order(), 1);
    EXPECT_NEAR(m.dc_gain(), 1.0 / 3.0, 1e-12);
    const RationalTF mm = m.minimal();
    EXPECT_EQ(mm.num(), m.num());
    EXPECT_EQ(mm.den(), m.den());
}

TEST(RationalTF, RealizationMatchesDirectEvaluation) {
    std::mt19937 rng(11);
    const FreqGrid grid = FreqGrid::logspace();
    for (int k = 0; k < 40; ++k) {
        const RationalTF g = random_stable_tf(rng, 1 + k % 6, k % 2 == 0);
        const FreqResponse fr = freq_response(tf_to_ss(g), grid);
        for (std::size_t i = 0; i < grid.omega.size(); ++i) {
            ASSERT_FALSE(fr.pole_on_grid[i]);
            const auto v = direct(g, grid.omega[i]);
            EXPECT_LE(std::abs(fr.value[i] - v), 1e-9 * (1.0 + std::abs(v)));
        }
    }
}

TEST(RationalTF, AlgebraMatchesPointwise) {
    std::mt19937 rng(3);
    for (int k = 0; k < 20; ++k) {
        const RationalTF a = random_stable_tf(rng, 2, false), b = random_stable_tf(rng, 3, true);
        for (double w : {0.001, 0.2, 5.0, 300.0}) {
            const std::complex<double> s{0, w};
            EXPECT_NEAR(std::abs((a + b)(s) - (a(s) + b(s))), 0.0, 1e-10 * (1 + std::abs(a(s) + b(s))));
            EXPECT_NEAR(std::abs((a - b)(s) - (a(s) - b(s))), 0.0, 1e-10 * (1 + std::abs(a(s) - b(s))));
            EXPECT_NEAR(std::abs((a * b)(s) - a(s) * b(s)), 0.0, 1e-10 * (1 + std::abs(a(s) * b(s))));
        }
    }
}

TEST(FreqResponse, PolesOnGridAreFlagged) {
    const RationalTF g({1.0}, {1.0, 0.0, 4.0});
    FreqGrid grid;
    grid.omega = {1.0, 2.0, 3.0};
    const FreqResponse a = freq_response(g, grid);
    const FreqResponse b = freq_response(tf_to_ss(g), grid);
    EXPECT_FALSE(a.pole_on_grid[0]);
    EXPECT_TRUE(a.pole_on_grid[1]);
    EXPECT_TRUE(b.pole_on_grid[1]);
    EXPECT_FALSE(b.pole_on_grid[2]);
    EXPECT_NEAR(b.value[0].real(), 1.0 / 3.0, 1e-14);
}

TEST(FreqGrid, DefaultIsLogSpaced) {
    const FreqGrid g = FreqGrid::logspace();
    ASSERT_EQ(g.omega.size(), 400u);
    EXPECT_DOUBLE_EQ(g.omega.front(), 1e-3);
    EXPECT_NEAR(g.omega.back(), 1e3, 1e-9);
    EXPECT_NEAR(g.omega[1] / g.omega[0], g.omega[200] / g.omega[199], 1e-12);
}

TEST(Hurwitz, BoundaryCases) {
    MatrixXd A(2, 2);
    A << -1, 0, 0, -1e-10;
    EXPECT_FALSE(is_hurwitz(A));
    A(1, 1) = -1e-8;
    EXPECT_TRUE(is_hurwitz(A));
    EXPECT_TRUE(is_hurwitz(MatrixXd(0, 0)));
}

TEST(Hinf, FirstOrderPeakIsDcGain) {
    EXPECT_NEAR(hinf_norm(tf_to_ss(RationalTF::first_order(-33.3, 0.2))), 33.3, 33.3 * 1e-6);
}

TEST(Hinf, ResonantPeakMatchesClosedForm) {
    for (double zeta : {0.05, 0.2, 0.5}) {
        const double wn = 3.0;
        const RationalTF g({wn * wn}, {1.0, 2 * zeta * wn, wn * wn});
        const double peak = 1.0 / (2.0 * zeta * std::sqrt(1.0 - zeta * zeta));
        EXPECT_NEAR(hinf_norm(tf_to_ss(g), 1e-8), peak, peak * 1e-6);
    }
}

TEST(Hinf, AgreesWithDenseGrid) {
    std::mt19937 rng(5);
    for (int k = 0; k < 30; ++k) {
        const StateSpace ss = tf_to_ss(random_stable_tf(rng, 2 + k % 5, k % 3 == 0));
        const double h = hinf_norm(ss);
        const double g = dense_grid_peak(ss);
        EXPECT_GE(h, g * (1 - 1e-6));
        EXPECT_LE(h, g * (1 + 1e-3));
    }
}

TEST(Hinf, MimoAgreesWithDenseGrid) {
    std::mt19937 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        StateSpace ss;
        ss.A = MatrixXd::NullaryExpr(5, 5, [&]() { return n(rng); });
        ss.A -= (spectral_abscissa(ss.A) + 0.3) * MatrixXd::Identity(5, 5);
        ss.B = MatrixXd::NullaryExpr(5, 2, [&]() { return n(rng); });
        ss.C = MatrixXd::NullaryExpr(3, 5, [&]() { return n(rng); });
        ss.D = 0.1 * MatrixXd::NullaryExpr(3, 2, [&]() { return n(rng); });
        const double h = hinf_norm(ss);
        const double g = dense_grid_peak(ss);
        EXPECT_GE(h, g * (1 - 1e-6));
        EXPECT_LE(h, g * (1 + 1e-3));
    }
}

TEST(Hinf, UnstableSystemRejected) {
    EXPECT_THROW(hinf_norm(tf_to_ss(RationalTF({1.0}, {1.0, -1.0}))), Error);
}

TEST(Balance, PreservesTransferFunction) {
    std::mt19937 rng(13);
    for (int k = 0; k < 20; ++k) {
        const StateSpace ss = tf_to_ss(random_stable_tf(rng, 1 + k % 6, k % 2 == 1));
        const StateSpace bs = balance(ss);
        for (double w : {0.0, 0.05, 1.0, 20.0, 500.0}) {
            const double a = sigma_max_at(ss, w);
            MatrixXc G1, G2;
            evaluate(ss, {0, w}, G1);
            evaluate(bs, {0, w}, G2);
            EXPECT_LE(std::abs(G1(0, 0) - G2(0, 0)), 1e-8 * (1 + a));
        }
    }
}

TEST(Lyapunov, ResidualIsSmall) {
    std::mt19937 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    MatrixXd A = MatrixXd::NullaryExpr(6, 6, [&]() { return n(rng); });
    A -= (spectral_abscissa(A) + 0.5) * MatrixXd::Identity(6, 6);
    MatrixXd B = MatrixXd::NullaryExpr(6, 2, [&]() { return n(rng); });
    const MatrixXd Q = B * B.transpose();
    const MatrixXd X = lyapunov(A, Q);
    EXPECT_LE((A * X + X * A.transpose() + Q).norm(), 1e-10 * Q.norm());
}

TEST(StepResponse, FirstOrderClosedForm) {
    const StateSpace ss = tf_to_ss(RationalTF::first_order(2.0, 0.5));
    const auto y = step_response(ss, {0.0, 0.5, 1.0, 3.0});
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double t = std::vector<double>{0.0, 0.5, 1.0, 3.0}[i];
        EXPECT_NEAR(y[i], 2.0 * (1.0 - std::exp(-t / 0.5)), 1e-12);
    }
}
