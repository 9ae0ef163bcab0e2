#pragma once

#include "dvpp/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

namespace dvpp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// DC shares proportional to capacity: theta_i = (1 - fixed_dc) y_i / sum(y).
inline VectorXd allocate(const VectorXd& y, double fixed_dc = 0.0) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (!(y(i) >= 0.0) || !std::isfinite(y(i))) throw Error("capacities must be finite and non-negative");
    const double total = 1.0 - fixed_dc;
    const double sy = y.sum();
    if (sy <= 0.0) {
        if (std::abs(total) <= 1e-15) return VectorXd::Zero(y.size());
        throw Error("no capacity to carry required DC gain");
    }
    return total * y / sy;
}

// Minimizes sum theta_i^2 / y_i subject to sum theta = 1 - fixed_dc and
// theta >= 0 by pattern search along pairwise exchanges, halving the step until
// it is below step_tol. Zero-capacity entries are held at zero.
inline VectorXd qp_oracle(const VectorXd& y, double fixed_dc = 0.0, double step_tol = 1e-13) {
    const int n = static_cast<int>(y.size());
    const double total = 1.0 - fixed_dc;
    std::vector<int> act;
    for (int i = 0; i < n; ++i)
        if (y(i) > 0.0) act.push_back(i);
    if (act.empty()) {
        if (std::abs(total) <= 1e-15) return VectorXd::Zero(n);
        throw Error("no capacity to carry required DC gain");
    }
    VectorXd th = VectorXd::Zero(n);
    for (int i : act) th(i) = total / static_cast<double>(act.size());
    double h = std::abs(total) / 4.0 + 1e-300;
    while (h > step_tol * std::max(1.0, std::abs(total))) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::size_t a = 0; a < act.size(); ++a)
                for (std::size_t b = 0; b < act.size(); ++b) {
                    if (a == b) continue;
                    const int i = act[a], j = act[b];
                    // Move h from j to i while it lowers the objective and stays feasible.
                    for (;;) {
                        const double ti = th(i) + h, tj = th(j) - h;
                        if ((total >= 0.0 && tj < 0.0) || (total < 0.0 && ti > 0.0)) break;
                        // The cost change factors as 2h((th_i + h/2)/y_i - (th_j - h/2)/y_j);
                        // comparing the factors avoids cancellation.
                        if (!((th(i) + 0.5 * h) / y(i) < (th(j) - 0.5 * h) / y(j))) break;
                        th(i) = ti;
                        th(j) = tj;
                        improved = true;
                    }
                }
        }
        h *= 0.5;
    }
    return th;
}

// Per-coordinate range of the allocation when each capacity may vary inside
// [y_lo, y_hi]: the share is smallest when the device is at its minimum and the
// others at their maximum, and vice versa.
inline std::pair<VectorXd, VectorXd> allocation_bounds(const VectorXd& y_lo, const VectorXd& y_hi,
                                                       double fixed_dc = 0.0) {
    const int n = static_cast<int>(y_lo.size());
    const double total = 1.0 - fixed_dc;
    VectorXd lo(n), hi(n);
    const double sum_lo = y_lo.sum(), sum_hi = y_hi.sum();
    for (int i = 0; i < n; ++i) {
        const double dlo = y_lo(i) + (sum_hi - y_hi(i));
        const double dhi = y_hi(i) + (sum_lo - y_lo(i));
        lo(i) = dlo > 0.0 ? total * y_lo(i) / dlo : 0.0;
        hi(i) = dhi > 0.0 ? total * y_hi(i) / dhi : total;
        if (lo(i) > hi(i)) std::swap(lo(i), hi(i));
    }
    return {lo, hi};
}

struct CommGraph {
    int n = 0;
    std::vector<std::pair<int, int>> edges;

    std::vector<std::vector<int>> neighbors() const {
        std::vector<std::vector<int>> nb(static_cast<std::size_t>(n));
        for (auto [a, b] : edges) {
            if (a < 0 || b < 0 || a >= n || b >= n || a == b) throw Error("invalid communication edge");
            nb[static_cast<std::size_t>(a)].push_back(b);
            nb[static_cast<std::size_t>(b)].push_back(a);
        }
        return nb;
    }

    bool connected() const {
        if (n <= 1) return true;
        const auto nb = neighbors();
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        std::vector<int> stack{0};
        seen[0] = true;
        int count = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : nb[static_cast<std::size_t>(v)])
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = true;
                    ++count;
                    stack.push_back(w);
                }
        }
        return count == n;
    }

    MatrixXd laplacian() const {
        MatrixXd L = MatrixXd::Zero(n, n);
        for (auto [a, b] : edges) {
            L(a, a) += 1.0;
            L(b, b) += 1.0;
            L(a, b) -= 1.0;
            L(b, a) -= 1.0;
        }
        return L;
    }

    int max_degree() const {
        int d = 0;
        for (const auto& v : neighbors()) d = std::max(d, static_cast<int>(v.size()));
        return d;
    }
};

// Piecewise-constant capacities: values[k] holds from times[k] on.
struct CapacityProfile {
    std::vector<double> times;
    std::vector<VectorXd> values;

    const VectorXd& at(double t) const {
        std::size_t k = 0;
        while (k + 1 < times.size() && t >= times[k + 1]) ++k;
        return values[k];
    }
};

// Discrete-time consensus filter that moves every theta_i toward a common
// ratio theta_i / y_i while conserving the sum. Devices with zero capacity
// hold theta = 0 and pass ratios between their neighbours.
class ConsensusFilter {
public:
    ConsensusFilter(CommGraph g, double dt) : g_(std::move(g)), dt_(dt) {
        if (!g_.connected()) throw Error("consensus cannot reach allocation: communication graph is disconnected");
        if (!(dt > 0.0)) throw Error("consensus step must be positive");
        L_ = g_.laplacian();
        nb_ = g_.neighbors();
    }

    double dt() const { return dt_; }
    const CommGraph& graph() const { return g_; }

    // Largest step for which the explicit update stays contractive.
    static double step_bound(const CommGraph& g, const VectorXd& y) {
        double ymin = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < y.size(); ++i)
            if (y(i) > 0.0) ymin = std::min(ymin, y(i));
        const int deg = std::max(1, g.max_degree());
        return ymin / deg;
    }

    // Installs new capacities. Shares held by devices whose capacity dropped to
    // zero are handed to their neighbours in equal parts.
    void set_capacity(const VectorXd& y, VectorXd& theta) {
        if (y.size() != g_.n) throw Error("capacity dimension mismatch");
        if (y.sum() <= 0.0) throw Error("no capacity to carry required DC gain");
        if (!(dt_ < step_bound(g_, y))) throw Error("consensus step exceeds stability bound");
        y_ = y;
        relay_.clear();
        pos_.clear();
        for (int i = 0; i < g_.n; ++i) (y(i) > 0.0 ? pos_ : relay_).push_back(i);
        for (int guard = 0; guard < g_.n; ++guard) {
            bool moved = false;
            for (int r : relay_) {
                if (theta(r) == 0.0) continue;
                const auto& nb = nb_[static_cast<std::size_t>(r)];
                const double share = theta(r) / static_cast<double>(nb.size());
                for (int w : nb) theta(w) += share;
                theta(r) = 0.0;
                moved = true;
            }
            if (!moved) break;
        }
        if (!relay_.empty()) {
            const int nr = static_cast<int>(relay_.size()), np = static_cast<int>(pos_.size());
            MatrixXd Lrr(nr, nr), Lrn(nr, np);
            for (int a = 0; a < nr; ++a) {
                for (int b = 0; b < nr; ++b) Lrr(a, b) = L_(relay_[a], relay_[b]);
                for (int b = 0; b < np; ++b) Lrn(a, b) = L_(relay_[a], pos_[b]);
            }
            harmonic_ = -Lrr.fullPivLu().solve(Lrn);
        }
    }

    // One explicit update of theta under the current capacities.
    void step(VectorXd& theta) const {
        VectorXd r = VectorXd::Zero(g_.n);
        VectorXd rn(static_cast<int>(pos_.size()));
        for (std::size_t a = 0; a < pos_.size(); ++a) {
            r(pos_[a]) = theta(pos_[a]) / y_(pos_[a]);
            rn(static_cast<int>(a)) = r(pos_[a]);
        }
        if (!relay_.empty()) {
            const VectorXd rr = harmonic_ * rn;
            for (std::size_t a = 0; a < relay_.size(); ++a) r(relay_[a]) = rr(static_cast<int>(a));
        }
        VectorXd dth = VectorXd::Zero(g_.n);
        for (auto [a, b] : g_.edges) {
            const double flow = r(b) - r(a);
            dth(a) += flow;
            dth(b) -= flow;
        }
        for (int rl : relay_) dth(rl) = 0.0;
        theta += dt_ * dth;
    }

private:
    CommGraph g_;
    double dt_;
    MatrixXd L_;
    std::vector<std::vector<int>> nb_;
    VectorXd y_;
    std::vector<int> pos_, relay_;
    MatrixXd harmonic_;
};

struct ConsensusTrace {
    std::vector<double> t;
    std::vector<VectorXd> theta;
};

// Runs the consensus filter from theta0 over [0, horizon]. theta0 must already
// sum to 1 - fixed_dc.
inline ConsensusTrace consensus_simulate(const CommGraph& g, const CapacityProfile& profile, const VectorXd& theta0,
                                         double dt, double horizon, double fixed_dc = 0.0) {
    if (theta0.size() != g.n) throw Error("initial allocation dimension mismatch");
    if (std::abs(theta0.sum() - (1.0 - fixed_dc)) > 1e-9)
        throw Error("initial allocation does not sum to the required DC gain");
    if (profile.times.empty() || profile.times.size() != profile.values.size())
        throw Error("capacity profile is empty");
    ConsensusFilter f(g, dt);
    VectorXd th = theta0;
    std::size_t seg = 0;
    f.set_capacity(profile.values[0], th);
    ConsensusTrace tr;
    const auto steps = static_cast<long>(std::llround(horizon / dt));
    tr.t.reserve(static_cast<std::size_t>(steps + 1));
    tr.theta.reserve(static_cast<std::size_t>(steps + 1));
    tr.t.push_back(0.0);
    tr.theta.push_back(th);
    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        while (seg + 1 < profile.times.size() && t >= profile.times[seg + 1] - 1e-12) {
            ++seg;
            f.set_capacity(profile.values[seg], th);
        }
        f.step(th);
        tr.t.push_back(static_cast<double>(k + 1) * dt);
        tr.theta.push_back(th);
    }
    return tr;
}

}  // namespace dvpp
