#pragma once

#include "dvpp/state_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dvpp {

inline double sigma_max(const MatrixXc& G) {
    if (G.size() == 0) return 0.0;
    Eigen::JacobiSVD<MatrixXc> svd(G);
    return svd.singularValues()(0);
}

inline double sigma_max_at(const StateSpace& ss, double omega) {
    MatrixXc G;
    if (!evaluate(ss, {0.0, omega}, G)) return std::numeric_limits<double>::infinity();
    return sigma_max(G);
}

// Largest singular value of the frequency response over a grid.
inline double hinf_grid(const StateSpace& ss, const FreqGrid& grid) {
    double best = sigma_max(ss.D);
    for (double w : grid.omega) best = std::max(best, sigma_max_at(ss, w));
    return best;
}

namespace detail {

// Imaginary-axis eigenvalues (as frequencies >= 0) of the Hamiltonian whose
// spectrum touches the axis exactly when gamma is below the peak gain.
inline std::vector<double> hamiltonian_crossings(const StateSpace& ss, double gamma) {
    const int n = ss.states(), m = ss.inputs(), p = ss.outputs();
    const MatrixXd R = gamma * gamma * MatrixXd::Identity(m, m) - ss.D.transpose() * ss.D;
    const MatrixXd S = gamma * gamma * MatrixXd::Identity(p, p) - ss.D * ss.D.transpose();
    const MatrixXd Ri = R.inverse();
    const MatrixXd Si = S.inverse();
    const MatrixXd Ah = ss.A + ss.B * Ri * ss.D.transpose() * ss.C;
    MatrixXd H(2 * n, 2 * n);
    H.topLeftCorner(n, n) = Ah;
    H.topRightCorner(n, n) = gamma * ss.B * Ri * ss.B.transpose();
    H.bottomLeftCorner(n, n) = -gamma * ss.C.transpose() * Si * ss.C;
    H.bottomRightCorner(n, n) = -Ah.transpose();
    Eigen::EigenSolver<MatrixXd> es(H, false);
    const double scale = 1.0 + H.cwiseAbs().maxCoeff();
    std::vector<double> w;
    for (int i = 0; i < 2 * n; ++i) {
        const auto l = es.eigenvalues()(i);
        if (std::abs(l.real()) <= 1e-7 * std::max(1.0, std::abs(l)) + 1e-13 * scale && l.imag() >= 0.0)
            w.push_back(l.imag());
    }
    std::sort(w.begin(), w.end());
    return w;
}

}  // namespace detail

// H-infinity norm of a stable system by level-set iteration on the Hamiltonian.
// The returned value is a lower bound within relative tolerance tol of the
// true peak gain.
inline double hinf_norm(const StateSpace& ss, double tol = 1e-6) {
    if (!is_hurwitz(ss.A)) throw Error("unstable system has unbounded H-inf norm");
    if (ss.states() == 0) return sigma_max(ss.D);
    double lb = std::max(sigma_max(ss.D), sigma_max_at(ss, 0.0));
    // Seed with the modal frequencies, which is where peaks usually sit.
    Eigen::EigenSolver<MatrixXd> es(ss.A, false);
    for (int i = 0; i < ss.states(); ++i) {
        const auto l = es.eigenvalues()(i);
        lb = std::max(lb, sigma_max_at(ss, std::abs(l)));
        lb = std::max(lb, sigma_max_at(ss, std::abs(l.imag())));
    }
    if (lb == 0.0) return 0.0;
    for (int it = 0; it < 60; ++it) {
        const double g = (1.0 + tol) * lb;
        const auto w = detail::hamiltonian_crossings(ss, g);
        if (w.empty()) return lb;
        const double before = lb;
        if (w.size() == 1) {
            lb = std::max(lb, sigma_max_at(ss, w[0]));
        } else {
            for (std::size_t k = 0; k + 1 < w.size(); ++k)
                lb = std::max(lb, sigma_max_at(ss, 0.5 * (w[k] + w[k + 1])));
            for (double wk : w) lb = std::max(lb, sigma_max_at(ss, wk));
        }
        if (lb <= before) {
            // Spurious near-axis eigenvalues: fall back to a fine local search.
            for (double wk : w) {
                for (int j = -50; j <= 50; ++j) {
                    const double wj = std::max(0.0, wk * (1.0 + 1e-3 * j) + 1e-9 * j);
                    lb = std::max(lb, sigma_max_at(ss, wj));
                }
            }
            if (lb <= before) return lb;
        }
    }
    return lb;
}

}  // namespace dvpp
