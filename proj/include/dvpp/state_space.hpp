#pragma once

#include "dvpp/errors.hpp"
#include "dvpp/rational_tf.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <vector>

namespace dvpp {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatrixXc = Eigen::MatrixXcd;

struct StateSpace {
    MatrixXd A, B, C, D;

    int states() const { return static_cast<int>(A.rows()); }
    int inputs() const { return static_cast<int>(B.cols()); }
    int outputs() const { return static_cast<int>(C.rows()); }

    MatrixXd dc_gain() const {
        if (states() == 0) return D;
        return D - C * A.partialPivLu().solve(B);
    }
};

struct FreqGrid {
    std::vector<double> omega;

    static FreqGrid logspace(double lo = 1e-3, double hi = 1e3, int n = 400) {
        FreqGrid g;
        g.omega.resize(static_cast<std::size_t>(n));
        const double a = std::log10(lo), b = std::log10(hi);
        for (int i = 0; i < n; ++i)
            g.omega[static_cast<std::size_t>(i)] = std::pow(10.0, n == 1 ? a : a + (b - a) * i / (n - 1));
        return g;
    }
};

struct FreqResponse {
    std::vector<std::complex<double>> value;
    std::vector<bool> pole_on_grid;
};

inline bool is_hurwitz(const MatrixXd& A, double margin = 1e-9) {
    if (A.rows() == 0) return true;
    Eigen::EigenSolver<MatrixXd> es(A, false);
    for (int i = 0; i < A.rows(); ++i)
        if (es.eigenvalues()(i).real() >= -margin) return false;
    return true;
}

inline double spectral_abscissa(const MatrixXd& A) {
    if (A.rows() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<MatrixXd> es(A, false);
    return es.eigenvalues().real().maxCoeff();
}

inline double spectral_radius(const MatrixXd& A) {
    if (A.rows() == 0) return 0.0;
    Eigen::EigenSolver<MatrixXd> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Controllable canonical realization of a proper transfer function.
inline StateSpace tf_to_ss(const RationalTF& g) {
    if (!g.is_proper()) throw Error("improper transfer function");
    const int n = g.order();
    const double d = g.num().coeff_of_power(n);
    StateSpace ss;
    ss.A = MatrixXd::Zero(n, n);
    ss.B = MatrixXd::Zero(n, 1);
    ss.C = MatrixXd::Zero(1, n);
    ss.D = MatrixXd::Constant(1, 1, d);
    for (int j = 0; j < n; ++j) {
        const double aj = g.den().coeff_of_power(n - 1 - j);
        ss.A(0, j) = -aj;
        ss.C(0, j) = g.num().coeff_of_power(n - 1 - j) - d * aj;
    }
    for (int i = 1; i < n; ++i) ss.A(i, i - 1) = 1.0;
    if (n > 0) ss.B(0, 0) = 1.0;
    return ss;
}

// Transfer matrix at s. Returns false when sI - A is numerically singular.
inline bool evaluate(const StateSpace& ss, std::complex<double> s, MatrixXc& out) {
    const int n = ss.states();
    out = ss.D.cast<std::complex<double>>();
    if (n == 0) return true;
    MatrixXc M = s * MatrixXc::Identity(n, n) - ss.A.cast<std::complex<double>>();
    Eigen::PartialPivLU<MatrixXc> lu(M);
    const double scale = 1.0 + ss.A.cwiseAbs().maxCoeff() + std::abs(s);
    if (std::abs(lu.determinant()) == 0.0 || lu.rcond() < 1e-14) return false;
    // rcond alone is unreliable for exact poles on the grid; check the pivots too.
    const MatrixXc U = lu.matrixLU().triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i)
        if (std::abs(U(i, i)) < 1e-13 * scale) return false;
    out += ss.C.cast<std::complex<double>>() * lu.solve(ss.B.cast<std::complex<double>>());
    return true;
}

// SISO frequency response on a grid; points that hit a pole are flagged and
// reported as NaN.
inline FreqResponse freq_response(const StateSpace& ss, const FreqGrid& grid, int out = 0, int in = 0) {
    FreqResponse r;
    r.value.resize(grid.omega.size());
    r.pole_on_grid.assign(grid.omega.size(), false);
    MatrixXc G;
    for (std::size_t k = 0; k < grid.omega.size(); ++k) {
        if (evaluate(ss, {0.0, grid.omega[k]}, G)) {
            r.value[k] = G(out, in);
        } else {
            r.pole_on_grid[k] = true;
            r.value[k] = {std::nan(""), std::nan("")};
        }
    }
    return r;
}

inline FreqResponse freq_response(const RationalTF& g, const FreqGrid& grid) {
    FreqResponse r;
    r.value.resize(grid.omega.size());
    r.pole_on_grid.assign(grid.omega.size(), false);
    for (std::size_t k = 0; k < grid.omega.size(); ++k) {
        const std::complex<double> s{0.0, grid.omega[k]};
        const auto d = g.den()(s);
        if (std::abs(d) <= 1e-14 * std::max(1.0, std::abs(g.den().at_zero()))) {
            r.pole_on_grid[k] = true;
            r.value[k] = {std::nan(""), std::nan("")};
        } else {
            r.value[k] = g.num()(s) / d;
        }
    }
    return r;
}

// Solves A X + X A' + Q = 0 by vectorization. Intended for the small systems
// handled here (a few tens of states at most).
inline MatrixXd lyapunov(const MatrixXd& A, const MatrixXd& Q) {
    const int n = static_cast<int>(A.rows());
    const MatrixXd I = MatrixXd::Identity(n, n);
    // vec is column-major: vec(AX) = (I kron A) vec X, vec(XA') = (A kron I) vec X.
    MatrixXd Kc = MatrixXd::Zero(n * n, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Kc.block(i * n, j * n, n, n) += (i == j) ? A : MatrixXd::Zero(n, n);
            Kc.block(i * n, j * n, n, n) += A(i, j) * I;
        }
    VectorXd q = -Eigen::Map<const VectorXd>(Q.data(), n * n);
    VectorXd x = Kc.fullPivLu().solve(q);
    MatrixXd X = Eigen::Map<MatrixXd>(x.data(), n, n);
    return 0.5 * (X + X.transpose());
}

// Square-root balanced realization of a stable system. States whose Hankel
// singular value falls below rel_tol times the largest are truncated; with the
// default tolerance this only removes numerically non-minimal parts.
inline StateSpace balance(const StateSpace& ss, double rel_tol = 1e-11) {
    const int n = ss.states();
    if (n == 0) return ss;
    if (!is_hurwitz(ss.A)) throw Error("balanced realization requires a stable system");
    const MatrixXd Wc = lyapunov(ss.A, ss.B * ss.B.transpose());
    const MatrixXd Wo = lyapunov(ss.A.transpose(), ss.C.transpose() * ss.C);
    Eigen::SelfAdjointEigenSolver<MatrixXd> ec(Wc), eo(Wo);
    // Factors via eigen-decomposition tolerate semidefinite Gramians.
    const MatrixXd Lc = ec.eigenvectors() * ec.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const MatrixXd Lo = eo.eigenvectors() * eo.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    Eigen::JacobiSVD<MatrixXd> svd(Lo.transpose() * Lc, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd hsv = svd.singularValues();
    int r = 0;
    while (r < n && hsv(r) > rel_tol * hsv(0)) ++r;
    if (hsv(0) == 0.0) r = 0;
    StateSpace out;
    if (r == 0) {
        out.A = MatrixXd::Zero(0, 0);
        out.B = MatrixXd::Zero(0, ss.inputs());
        out.C = MatrixXd::Zero(ss.outputs(), 0);
        out.D = ss.D;
        return out;
    }
    const VectorXd sinv = hsv.head(r).cwiseSqrt().cwiseInverse();
    const MatrixXd T = Lc * svd.matrixV().leftCols(r) * sinv.asDiagonal();
    const MatrixXd Ti = sinv.asDiagonal() * svd.matrixU().leftCols(r).transpose() * Lo.transpose();
    out.A = Ti * ss.A * T;
    out.B = Ti * ss.B;
    out.C = ss.C * T;
    out.D = ss.D;
    return out;
}

// Parallel connection with shared inputs and summed outputs.
inline StateSpace parallel(const StateSpace& a, const StateSpace& b) {
    StateSpace r;
    const int na = a.states(), nb = b.states();
    r.A = MatrixXd::Zero(na + nb, na + nb);
    r.A.topLeftCorner(na, na) = a.A;
    r.A.bottomRightCorner(nb, nb) = b.A;
    r.B.resize(na + nb, a.inputs());
    r.B << a.B, b.B;
    r.C.resize(a.outputs(), na + nb);
    r.C << a.C, b.C;
    r.D = a.D + b.D;
    return r;
}

// Zero-order-hold discretization via the exponential of the augmented matrix.
inline void zoh(const MatrixXd& A, const MatrixXd& B, double dt, MatrixXd& Phi, MatrixXd& Gamma) {
    const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
    MatrixXd M = MatrixXd::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = A * dt;
    M.topRightCorner(n, m) = B * dt;
    const MatrixXd E = M.exp();
    Phi = E.topLeftCorner(n, n);
    Gamma = E.topRightCorner(n, m);
}

// Response y(t) = C x(t) + D u to a unit step on input `in` from rest, evaluated
// independently at each requested time.
inline std::vector<double> step_response(const StateSpace& ss, const std::vector<double>& t, int out = 0,
                                         int in = 0) {
    std::vector<double> y(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
        MatrixXd Phi, Gam;
        if (ss.states() == 0) {
            y[k] = ss.D(out, in);
            continue;
        }
        zoh(ss.A, ss.B.col(in), t[k], Phi, Gam);
        y[k] = (ss.C.row(out) * Gam)(0, 0) + ss.D(out, in);
    }
    return y;
}

}  // namespace dvpp
