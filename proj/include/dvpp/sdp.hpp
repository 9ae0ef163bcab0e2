#pragma once

#include "dvpp/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace dvpp::sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Term {
    int var;
    MatrixXd coef;  // symmetric
};

// Linear matrix inequality constant + sum_j x_var coef <= 0 (negative semidefinite).
struct Lmi {
    std::string family;
    MatrixXd constant;
    std::vector<Term> terms;

    int size() const { return static_cast<int>(constant.rows()); }
};

// minimize c'x subject to every LMI.
struct Problem {
    int num_vars = 0;
    VectorXd c;
    std::vector<Lmi> lmis;
};

struct Options {
    int max_iterations = 150;
    double gap_tol = 1e-8;
    double feas_tol = 1e-9;
    // When progress stalls the best iterate is still accepted if its residuals
    // and gap are below this.
    double accept_tol = 1e-6;
    bool trace = false;
};

enum class Status { optimal, infeasible, stalled };

struct Result {
    Status status = Status::stalled;
    VectorXd x;
    double objective = 0.0;
    int iterations = 0;
    double rel_gap = 0.0;
    double primal_infeas = 0.0;
    double dual_infeas = 0.0;
    std::string family;  // LMI family implicated when not optimal
};

inline MatrixXd evaluate(const Lmi& lmi, const VectorXd& x) {
    MatrixXd F = lmi.constant;
    for (const auto& t : lmi.terms) F += x(t.var) * t.coef;
    return 0.5 * (F + F.transpose());
}

inline double max_eigenvalue(const MatrixXd& S) {
    if (S.rows() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

namespace detail {

struct Block {
    int n = 0;
    MatrixXd C;                 // slack Z = C - sum y_j A_j
    std::vector<int> vars;
    std::vector<MatrixXd> A;
    MatrixXd Avec;              // rows are vec(A_j)
    double scale = 1.0;
};

inline double inner(const MatrixXd& a, const MatrixXd& b) { return a.cwiseProduct(b).sum(); }

inline MatrixXd sym(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

// Largest alpha in (0, inf] with X + alpha dX still positive semidefinite.
inline double max_step(const MatrixXd& X, const MatrixXd& dX) {
    Eigen::LLT<MatrixXd> llt(X);
    if (llt.info() != Eigen::Success) return 0.0;
    const MatrixXd Li = llt.matrixL().solve(MatrixXd::Identity(X.rows(), X.cols()));
    const MatrixXd W = sym(Li * dX * Li.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(W, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

}  // namespace detail

// Infeasible-start primal-dual interior-point method with the HKM search
// direction and a Mehrotra predictor-corrector step. Blocks and variables are
// rescaled internally; the returned x is in the caller's units and, on
// success, strictly satisfies every LMI up to the feasibility tolerance.
inline Result solve(const Problem& prob, const Options& opt = {}) {
    using detail::inner;
    using detail::sym;
    const int m = prob.num_vars;
    if (prob.c.size() != m) throw Error("objective dimension mismatch");
    const int nb = static_cast<int>(prob.lmis.size());

    std::vector<detail::Block> blk(static_cast<std::size_t>(nb));
    VectorXd dscale = VectorXd::Zero(m);
    for (int k = 0; k < nb; ++k) {
        const Lmi& L = prob.lmis[static_cast<std::size_t>(k)];
        auto& b = blk[static_cast<std::size_t>(k)];
        b.n = L.size();
        double s = L.constant.norm();
        for (const auto& t : L.terms) {
            if (t.var < 0 || t.var >= m) throw Error("LMI term references unknown variable");
            s = std::max(s, t.coef.norm());
        }
        b.scale = s > 0.0 ? 1.0 / s : 1.0;
        for (const auto& t : L.terms) dscale(t.var) = std::max(dscale(t.var), b.scale * t.coef.norm());
    }
    for (int j = 0; j < m; ++j) dscale(j) = dscale(j) > 0.0 ? 1.0 / dscale(j) : 1.0;

    double normA = 0.0, normC = 0.0;
    for (int k = 0; k < nb; ++k) {
        const Lmi& L = prob.lmis[static_cast<std::size_t>(k)];
        auto& b = blk[static_cast<std::size_t>(k)];
        b.C = -b.scale * sym(L.constant);
        normC = std::max(normC, b.C.norm());
        // Merge repeated variables within a block.
        std::vector<int> slot(static_cast<std::size_t>(m), -1);
        for (const auto& t : L.terms) {
            const MatrixXd a = b.scale * dscale(t.var) * sym(t.coef);
            int& s = slot[static_cast<std::size_t>(t.var)];
            if (s < 0) {
                s = static_cast<int>(b.vars.size());
                b.vars.push_back(t.var);
                b.A.push_back(a);
            } else {
                b.A[static_cast<std::size_t>(s)] += a;
            }
        }
        b.Avec.resize(static_cast<Eigen::Index>(b.vars.size()), b.n * b.n);
        for (std::size_t j = 0; j < b.vars.size(); ++j) {
            b.Avec.row(static_cast<Eigen::Index>(j)) = Eigen::Map<const VectorXd>(b.A[j].data(), b.n * b.n).transpose();
            normA = std::max(normA, b.A[j].norm());
        }
    }
    const VectorXd bvec = prob.c.cwiseProduct(dscale);

    int ntot = 0;
    for (const auto& b : blk) ntot += b.n;
    double xi = 0.0;
    for (int j = 0; j < m; ++j) xi = std::max(xi, (1.0 + std::abs(bvec(j))) / (1.0 + normA));
    xi = 10.0 * std::max(1.0, ntot * xi);
    const double eta = 10.0 * (1.0 + std::max(normA, normC)) / std::sqrt(std::max(1, ntot));

    std::vector<MatrixXd> X(static_cast<std::size_t>(nb)), Z(static_cast<std::size_t>(nb)),
        Zi(static_cast<std::size_t>(nb)), Rd(static_cast<std::size_t>(nb));
    for (int k = 0; k < nb; ++k) {
        const int n = blk[static_cast<std::size_t>(k)].n;
        X[static_cast<std::size_t>(k)] = xi * MatrixXd::Identity(n, n);
        Z[static_cast<std::size_t>(k)] = eta * MatrixXd::Identity(n, n);
    }
    VectorXd y = VectorXd::Zero(m);
    const double xi0 = xi;

    Result res;
    res.x = VectorXd::Zero(m);
    VectorXd best_y = y;
    double best_merit = std::numeric_limits<double>::infinity();
    Result best_res;
    int since_best = 0;
    double progress_merit = std::numeric_limits<double>::infinity();
    auto finish = [&](Status st) {
        if (st == Status::stalled && best_merit < opt.accept_tol) {
            y = best_y;
            const int its = res.iterations;
            res = best_res;
            res.iterations = its;
            st = Status::optimal;
        }
        res.status = st;
        res.x = y.cwiseProduct(dscale);
        res.objective = prob.c.dot(res.x);
        if (st != Status::optimal) {
            // Name the first block that is violated at the returned point, or
            // the block carrying most of the certificate.
            double best = -1.0;
            for (int k = 0; k < nb; ++k) {
                const Lmi& L = prob.lmis[static_cast<std::size_t>(k)];
                if (max_eigenvalue(evaluate(L, res.x)) > 0.0) {
                    res.family = L.family;
                    return res;
                }
                const double w = X[static_cast<std::size_t>(k)].trace();
                if (w > best) {
                    best = w;
                    res.family = L.family;
                }
            }
        }
        return res;
    };

    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it;
        // Residuals and stopping test.
        VectorXd rp = -bvec;
        double gap = 0.0, dobj = 0.0, dinf = 0.0;
        for (int k = 0; k < nb; ++k) {
            const auto& b = blk[static_cast<std::size_t>(k)];
            const MatrixXd& Xk = X[static_cast<std::size_t>(k)];
            MatrixXd R = b.C - Z[static_cast<std::size_t>(k)];
            for (std::size_t j = 0; j < b.vars.size(); ++j) {
                rp(b.vars[j]) -= inner(b.A[j], Xk);
                R -= y(b.vars[j]) * b.A[j];
            }
            Rd[static_cast<std::size_t>(k)] = R;
            dinf = std::max(dinf, R.norm());
            gap += inner(Xk, Z[static_cast<std::size_t>(k)]);
            dobj -= inner(b.C, Xk);
        }
        const double pobj = bvec.dot(y);
        const double mu = gap / ntot;
        res.primal_infeas = rp.norm() / (1.0 + bvec.norm());
        res.dual_infeas = dinf / (1.0 + normC);
        res.rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        const double rel_mu = gap / (1.0 + std::abs(pobj) + std::abs(dobj));
        if (opt.trace)
            std::fprintf(stderr, "it %3d pobj %+.9e dobj %+.9e pinf %.2e dinf %.2e gap %.2e\n", it, pobj, dobj,
                         res.primal_infeas, res.dual_infeas, res.rel_gap);
        if (res.primal_infeas < opt.feas_tol && res.dual_infeas < opt.feas_tol && res.rel_gap < opt.gap_tol &&
            rel_mu < opt.gap_tol)
            return finish(Status::optimal);
        const double merit = std::max({res.primal_infeas, res.dual_infeas, res.rel_gap, rel_mu});
        if (res.dual_infeas < opt.feas_tol && merit < best_merit) {
            best_merit = merit;
            best_y = y;
            best_res = res;
        }
        if (merit < 0.5 * progress_merit) {
            progress_merit = merit;
            since_best = 0;
        } else if (++since_best > 30) {
            return finish(Status::stalled);
        }

        // A growing primal iterate that nearly satisfies the homogeneous
        // equations is a certificate that the LMIs cannot be met.
        double trX = 0.0, cX = 0.0;
        for (int k = 0; k < nb; ++k) {
            trX += X[static_cast<std::size_t>(k)].trace();
            cX += inner(blk[static_cast<std::size_t>(k)].C, X[static_cast<std::size_t>(k)]);
        }
        if (trX > 1e8 * xi0 * ntot) {
            VectorXd aw = VectorXd::Zero(m);
            for (int k = 0; k < nb; ++k) {
                const auto& b = blk[static_cast<std::size_t>(k)];
                for (std::size_t j = 0; j < b.vars.size(); ++j)
                    aw(b.vars[j]) += inner(b.A[j], X[static_cast<std::size_t>(k)]);
            }
            if (aw.lpNorm<Eigen::Infinity>() < 1e-6 * trX && cX < -1e-8 * trX) return finish(Status::infeasible);
        }

        // Schur complement.
        MatrixXd M = MatrixXd::Zero(m, m);
        for (int k = 0; k < nb; ++k) {
            auto& b = blk[static_cast<std::size_t>(k)];
            Eigen::LLT<MatrixXd> llt(Z[static_cast<std::size_t>(k)]);
            if (llt.info() != Eigen::Success) {
                if (opt.trace) std::fprintf(stderr, "dual slack lost definiteness in block %d\n", k);
                return finish(Status::stalled);
            }
            Zi[static_cast<std::size_t>(k)] = llt.solve(MatrixXd::Identity(b.n, b.n));
            const MatrixXd& Xk = X[static_cast<std::size_t>(k)];
            const MatrixXd& Zk = Zi[static_cast<std::size_t>(k)];
            const int nv = static_cast<int>(b.vars.size());
            MatrixXd H(b.n * b.n, nv);
            for (int j = 0; j < nv; ++j) {
                const MatrixXd h = Xk * b.A[static_cast<std::size_t>(j)] * Zk;
                H.col(j) = Eigen::Map<const VectorXd>(h.data(), b.n * b.n);
            }
            const MatrixXd Mk = b.Avec * H;
            for (int a = 0; a < nv; ++a)
                for (int c = 0; c < nv; ++c) M(b.vars[static_cast<std::size_t>(a)], b.vars[static_cast<std::size_t>(c)]) += Mk(a, c);
        }
        M = sym(M);
        VectorXd dM = M.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        MatrixXd Ms = dM.asDiagonal() * M * dM.asDiagonal();
        Eigen::LLT<MatrixXd> mf(Ms);
        if (mf.info() != Eigen::Success) {
            Ms.diagonal().array() += 1e-12;
            mf.compute(Ms);
            if (mf.info() != Eigen::Success) {
                if (opt.trace) std::fprintf(stderr, "schur complement factorization failed\n");
                return finish(Status::stalled);
            }
        }

        auto direction = [&](const std::vector<MatrixXd>& Hterm, VectorXd& dy, std::vector<MatrixXd>& dX,
                             std::vector<MatrixXd>& dZ) {
            VectorXd rhs = rp;
            for (int k = 0; k < nb; ++k) {
                const auto& b = blk[static_cast<std::size_t>(k)];
                const MatrixXd W = Hterm[static_cast<std::size_t>(k)] -
                                   Zi[static_cast<std::size_t>(k)] * Rd[static_cast<std::size_t>(k)] * X[static_cast<std::size_t>(k)];
                for (std::size_t j = 0; j < b.vars.size(); ++j) rhs(b.vars[j]) -= inner(b.A[j], W);
            }
            dy = dM.asDiagonal() * mf.solve(dM.asDiagonal() * rhs);
            dX.resize(static_cast<std::size_t>(nb));
            dZ.resize(static_cast<std::size_t>(nb));
            for (int k = 0; k < nb; ++k) {
                const auto& b = blk[static_cast<std::size_t>(k)];
                MatrixXd dz = Rd[static_cast<std::size_t>(k)];
                for (std::size_t j = 0; j < b.vars.size(); ++j) dz -= dy(b.vars[j]) * b.A[j];
                dZ[static_cast<std::size_t>(k)] = sym(dz);
                dX[static_cast<std::size_t>(k)] =
                    sym(Hterm[static_cast<std::size_t>(k)] - Zi[static_cast<std::size_t>(k)] * dz * X[static_cast<std::size_t>(k)]);
            }
        };
        auto steps = [&](const std::vector<MatrixXd>& dX, const std::vector<MatrixXd>& dZ, double& ap, double& ad) {
            ap = ad = std::numeric_limits<double>::infinity();
            for (int k = 0; k < nb; ++k) {
                ap = std::min(ap, detail::max_step(X[static_cast<std::size_t>(k)], dX[static_cast<std::size_t>(k)]));
                ad = std::min(ad, detail::max_step(Z[static_cast<std::size_t>(k)], dZ[static_cast<std::size_t>(k)]));
            }
        };

        // Predictor.
        std::vector<MatrixXd> Ht(static_cast<std::size_t>(nb));
        for (int k = 0; k < nb; ++k) Ht[static_cast<std::size_t>(k)] = -X[static_cast<std::size_t>(k)];
        VectorXd dya;
        std::vector<MatrixXd> dXa, dZa;
        direction(Ht, dya, dXa, dZa);
        double ap, ad;
        steps(dXa, dZa, ap, ad);
        ap = std::min(1.0, ap);
        ad = std::min(1.0, ad);
        double gap_aff = 0.0;
        for (int k = 0; k < nb; ++k)
            gap_aff += inner(X[static_cast<std::size_t>(k)] + ap * dXa[static_cast<std::size_t>(k)],
                             Z[static_cast<std::size_t>(k)] + ad * dZa[static_cast<std::size_t>(k)]);
        const double sigma = std::clamp(std::pow(std::max(0.0, gap_aff) / std::max(gap, 1e-300), 3.0), 0.0, 1.0);

        // Corrector.
        for (int k = 0; k < nb; ++k)
            Ht[static_cast<std::size_t>(k)] = sym(sigma * mu * Zi[static_cast<std::size_t>(k)] - X[static_cast<std::size_t>(k)] -
                                                  Zi[static_cast<std::size_t>(k)] * dZa[static_cast<std::size_t>(k)] * dXa[static_cast<std::size_t>(k)]);
        VectorXd dy;
        std::vector<MatrixXd> dX, dZ;
        direction(Ht, dy, dX, dZ);
        steps(dX, dZ, ap, ad);
        ap = std::min(1.0, 0.98 * ap);
        ad = std::min(1.0, 0.98 * ad);
        if (opt.trace) std::fprintf(stderr, "    step primal %.3f dual %.3f sigma %.2e\n", ap, ad, sigma);
        if (ap < 1e-14 && ad < 1e-14) return finish(Status::stalled);
        for (int k = 0; k < nb; ++k) {
            X[static_cast<std::size_t>(k)] += ap * dX[static_cast<std::size_t>(k)];
            Z[static_cast<std::size_t>(k)] += ad * dZ[static_cast<std::size_t>(k)];
        }
        y += ad * dy;
    }
    res.iterations = opt.max_iterations;
    return finish(Status::stalled);
}

}  // namespace dvpp::sdp
