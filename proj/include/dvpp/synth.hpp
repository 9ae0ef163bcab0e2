#pragma once

#include "dvpp/adpf.hpp"
#include "dvpp/errors.hpp"
#include "dvpp/hinf_norm.hpp"
#include "dvpp/lpv.hpp"
#include "dvpp/sdp.hpp"
#include "dvpp/state_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dvpp {

// Plant, reference model and integrated matching error stacked into one
// parameter-dependent system with state z = (x, x_ref, sigma), control input u,
// exogenous input w and performance output eps = y - y_ref.
struct AugmentedSystem {
    AffineLpv sys;
    int n_plant = 0;
    int n_ref = 0;
    int n_sigma = 0;

    int states() const { return sys.states(); }
    int sigma_offset() const { return n_plant + n_ref; }
};

// plant_E and plant_F give the plant's own response to w; leave them empty
// when w only drives the reference model.
inline AugmentedSystem augment(const StateSpace& plant, const AffineLpv& ref, const MatrixXd& plant_E = {},
                               const MatrixXd& plant_F = {}) {
    const int n = plant.states(), m = plant.inputs(), p = plant.outputs();
    const int nr = ref.states(), nw = ref.exo_inputs();
    if (ref.outputs() != p) throw Error("plant and reference output dimensions differ");
    const bool sees = plant_E.size() > 0 || plant_F.size() > 0;
    if (sees && (plant_E.rows() != n || plant_E.cols() != nw || plant_F.rows() != p || plant_F.cols() != nw))
        throw Error("plant disturbance matrices do not match the exogenous input");
    const int nz = n + nr + p;
    AugmentedSystem aug;
    aug.n_plant = n;
    aug.n_ref = nr;
    aug.n_sigma = p;
    aug.sys.box = ref.box;

    auto lift = [&](const LpvMatrices& r, bool with_plant) {
        LpvMatrices z = LpvMatrices::zeros(nz, m, nw, p);
        if (with_plant) {
            z.A.topLeftCorner(n, n) = plant.A;
            z.A.block(n + nr, 0, p, n) = plant.C;
            z.B.topRows(n) = plant.B;
            z.B.bottomRows(p) = plant.D;
            z.C.leftCols(n) = plant.C;
            z.D = plant.D;
            z.A.block(n, n, nr, nr) = r.A;
            z.E.middleRows(n, nr) = r.E;
            if (sees) {
                z.E.topRows(n) = plant_E;
                z.E.bottomRows(p) = plant_F;
                z.F = plant_F;
            }
        }
        z.A.block(n + nr, n, p, nr) = -r.C;
        z.E.bottomRows(p) -= r.F;
        z.C.middleCols(n, nr) = -r.C;
        z.F -= r.F;
        return z;
    };
    aug.sys.base = lift(ref.base, true);
    for (const auto& inc : ref.inc) aug.sys.inc.push_back(lift(inc, false));
    return aug;
}

inline std::vector<VectorXd> vertex_enumerate(const ThetaBox& box) { return box_vertices(box); }

// Corners with repeated coordinates (lo == hi) removed, first occurrence kept.
inline std::vector<VectorXd> unique_vertices(const ThetaBox& box) {
    std::vector<VectorXd> out;
    for (const auto& v : box_vertices(box))
        if (std::none_of(out.begin(), out.end(), [&](const VectorXd& u) { return u == v; })) out.push_back(v);
    return out;
}

struct Tuning {
    double alpha = 5e-5;
    double mu = 1.0;
    VectorXd zeta;  // bound on each integrated error state; empty for none
};

struct SynthesisOptions {
    double eps_lmi = 1e-8;
    sdp::Options solver;
};

struct LmiReport {
    std::string family;
    double max_eig = 0.0;  // without the strictness margin
};

// Vertex gains sharing one Lyapunov matrix.
struct ControllerSet {
    ThetaBox box;
    std::vector<VectorXd> vertices;
    std::vector<MatrixXd> K;
    std::vector<MatrixXd> Y;
    MatrixXd Q;
    double gamma = 0.0;
    int iterations = 0;
    std::vector<LmiReport> lmis;
};

namespace detail {

struct SynthLayout {
    int nz, m, nw, p, q;
    int nq;          // entries of Q
    int y0;          // first Y variable
    int gamma;       // index of gamma
    int total;
    std::vector<std::pair<int, int>> q_entry;

    int y_var(int l, int i, int j) const { return y0 + l * m * nz + i * nz + j; }
};

inline SynthLayout make_layout(int nz, int m, int nw, int p, int q) {
    SynthLayout L{nz, m, nw, p, q, nz * (nz + 1) / 2, 0, 0, 0, {}};
    for (int a = 0; a < nz; ++a)
        for (int b = a; b < nz; ++b) L.q_entry.emplace_back(a, b);
    L.y0 = L.nq;
    L.gamma = L.y0 + q * m * nz;
    L.total = L.gamma + 1;
    return L;
}

inline MatrixXd sym_unit(int n, int a, int b) {
    MatrixXd S = MatrixXd::Zero(n, n);
    S(a, b) = 1.0;
    S(b, a) = 1.0;
    return S;
}

inline MatrixXd symmetrize_block(const MatrixXd& lower) {
    // lower holds the blocks on and below the diagonal; mirror them up.
    MatrixXd F = lower.triangularView<Eigen::Lower>();
    MatrixXd Ft = F.transpose();
    Ft.diagonal().setZero();
    return F + Ft;
}

// Bounded-real block built from two vertices (l == t gives the single-vertex
// inequality; l != t the pairwise sum with doubled level).
inline sdp::Lmi brl_block(const SynthLayout& L, const LpvMatrices& Ml, const LpvMatrices& Mt, int l, int t,
                          double eps, const std::string& family) {
    const int nz = L.nz, nw = L.nw, p = L.p, m = L.m;
    const int N = nz + nw + p;
    const bool same = (l == t);
    const MatrixXd Asum = same ? Ml.A : MatrixXd(Ml.A + Mt.A);
    const MatrixXd Csum = same ? Ml.C : MatrixXd(Ml.C + Mt.C);
    const MatrixXd Esum = same ? Ml.E : MatrixXd(Ml.E + Mt.E);
    const MatrixXd Fsum = same ? Ml.F : MatrixXd(Ml.F + Mt.F);
    sdp::Lmi lmi{family, MatrixXd::Zero(N, N), {}};
    MatrixXd low = MatrixXd::Zero(N, N);
    low.block(nz, 0, nw, nz) = Esum.transpose();
    low.block(nz + nw, nz, p, nw) = Fsum;
    lmi.constant = symmetrize_block(low) + eps * MatrixXd::Identity(N, N);

    for (int k = 0; k < L.nq; ++k) {
        const auto [a, b] = L.q_entry[static_cast<std::size_t>(k)];
        const MatrixXd S = sym_unit(nz, a, b);
        MatrixXd T = MatrixXd::Zero(N, N);
        T.topLeftCorner(nz, nz) = Asum * S + S * Asum.transpose();
        T.block(nz + nw, 0, p, nz) = Csum * S;
        lmi.terms.push_back({k, symmetrize_block(T)});
    }
    // u enters through B_l Y_t + B_t Y_l (or B_l Y_l).
    auto add_y = [&](int vtx, const MatrixXd& B, const MatrixXd& D) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nz; ++j) {
                MatrixXd T = MatrixXd::Zero(N, N);
                MatrixXd BU = MatrixXd::Zero(nz, nz);
                BU.col(j) = B.col(i);
                T.topLeftCorner(nz, nz) = BU + BU.transpose();
                T.block(nz + nw, j, p, 1) = D.col(i);
                lmi.terms.push_back({L.y_var(vtx, i, j), symmetrize_block(T)});
            }
    };
    if (same) {
        add_y(l, Ml.B, Ml.D);
    } else {
        add_y(t, Ml.B, Ml.D);
        add_y(l, Mt.B, Mt.D);
    }
    MatrixXd G = MatrixXd::Zero(N, N);
    G.block(nz, nz, nw + p, nw + p) = -(same ? 1.0 : 2.0) * MatrixXd::Identity(nw + p, nw + p);
    lmi.terms.push_back({L.gamma, G});
    return lmi;
}

}  // namespace detail

// Minimizes the common level gamma over a shared Lyapunov matrix and one gain
// per box vertex, subject to vertex and pairwise bounded-real inequalities plus
// input and integrated-error bounds. Every inequality carries a strict margin.
inline ControllerSet synthesize(const AugmentedSystem& aug, const Tuning& tune, const SynthesisOptions& opt = {}) {
    const AffineLpv& sys = aug.sys;
    const auto verts = vertex_enumerate(sys.box);
    const int q = static_cast<int>(verts.size());
    const int nz = sys.states(), m = sys.inputs(), nw = sys.exo_inputs(), p = sys.outputs();
    if (!(tune.alpha > 0.0) || !(tune.mu > 0.0)) throw ConfigError("tuning", "alpha and mu must be positive");
    if (tune.zeta.size() != 0 && tune.zeta.size() != aug.n_sigma)
        throw ConfigError("tuning.zeta", "one bound per integrated error state is required");
    const auto L = detail::make_layout(nz, m, nw, p, q);
    const double eps = opt.eps_lmi;

    std::vector<LpvMatrices> M;
    for (const auto& v : verts) M.push_back(sys.at(v));

    sdp::Problem prob;
    prob.num_vars = L.total;
    prob.c = VectorXd::Zero(L.total);
    prob.c(L.gamma) = 1.0;

    {
        sdp::Lmi pos{"lyapunov positivity", eps * MatrixXd::Identity(nz, nz), {}};
        for (int k = 0; k < L.nq; ++k) {
            const auto [a, b] = L.q_entry[static_cast<std::size_t>(k)];
            pos.terms.push_back({k, -detail::sym_unit(nz, a, b)});
        }
        prob.lmis.push_back(std::move(pos));
    }
    for (int l = 0; l < q; ++l)
        prob.lmis.push_back(detail::brl_block(L, M[static_cast<std::size_t>(l)], M[static_cast<std::size_t>(l)], l, l, eps,
                                              "vertex bounded-real " + std::to_string(l)));
    for (int l = 0; l < q; ++l)
        for (int t = l + 1; t < q; ++t)
            prob.lmis.push_back(detail::brl_block(L, M[static_cast<std::size_t>(l)], M[static_cast<std::size_t>(t)], l, t,
                                                  eps, "pairwise bounded-real " + std::to_string(l) + "," + std::to_string(t)));
    // Input bound: [Q Y'; Y (mu^2/alpha) I] >= 0 at every vertex.
    for (int l = 0; l < q; ++l) {
        const int N = nz + m;
        sdp::Lmi in{"input bound " + std::to_string(l), MatrixXd::Zero(N, N), {}};
        in.constant.bottomRightCorner(m, m) = -(tune.mu * tune.mu / tune.alpha) * MatrixXd::Identity(m, m);
        in.constant += eps * MatrixXd::Identity(N, N);
        for (int k = 0; k < L.nq; ++k) {
            const auto [a, b] = L.q_entry[static_cast<std::size_t>(k)];
            MatrixXd T = MatrixXd::Zero(N, N);
            T.topLeftCorner(nz, nz) = -detail::sym_unit(nz, a, b);
            in.terms.push_back({k, T});
        }
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nz; ++j) {
                MatrixXd T = MatrixXd::Zero(N, N);
                T(nz + i, j) = -1.0;
                T(j, nz + i) = -1.0;
                in.terms.push_back({L.y_var(l, i, j), T});
            }
        prob.lmis.push_back(std::move(in));
    }
    // Integrated-error bound: [(1/alpha) diag(zeta^2)  Z Q; Q Z'  Q] >= 0.
    if (tune.zeta.size() > 0) {
        const int v = static_cast<int>(tune.zeta.size());
        const int N = v + nz;
        const int s0 = aug.sigma_offset();
        sdp::Lmi st{"integrated error bound", MatrixXd::Zero(N, N), {}};
        st.constant.topLeftCorner(v, v) = -(1.0 / tune.alpha) * tune.zeta.cwiseAbs2().asDiagonal().toDenseMatrix();
        st.constant += eps * MatrixXd::Identity(N, N);
        for (int k = 0; k < L.nq; ++k) {
            const auto [a, b] = L.q_entry[static_cast<std::size_t>(k)];
            const MatrixXd S = detail::sym_unit(nz, a, b);
            MatrixXd T = MatrixXd::Zero(N, N);
            T.bottomRightCorner(nz, nz) = -S;
            const MatrixXd ZS = S.middleRows(s0, v);
            T.topRightCorner(v, nz) = -ZS;
            T.bottomLeftCorner(nz, v) = -ZS.transpose();
            st.terms.push_back({k, T});
        }
        prob.lmis.push_back(std::move(st));
    }

    const sdp::Result r = sdp::solve(prob, opt.solver);
    if (r.status != sdp::Status::optimal)
        throw SynthesisError("synthesis infeasible: " + r.family, r.family);

    ControllerSet cs;
    cs.box = sys.box;
    cs.vertices = verts;
    cs.gamma = r.x(L.gamma);
    cs.iterations = r.iterations;
    cs.Q = MatrixXd::Zero(nz, nz);
    for (int k = 0; k < L.nq; ++k) {
        const auto [a, b] = L.q_entry[static_cast<std::size_t>(k)];
        cs.Q(a, b) = cs.Q(b, a) = r.x(k);
    }
    Eigen::LLT<MatrixXd> qf(cs.Q);
    if (qf.info() != Eigen::Success) throw SynthesisError("synthesis infeasible: lyapunov positivity", "lyapunov positivity");
    for (int l = 0; l < q; ++l) {
        MatrixXd Y(m, nz);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nz; ++j) Y(i, j) = r.x(L.y_var(l, i, j));
        cs.Y.push_back(Y);
        cs.K.push_back(qf.solve(Y.transpose()).transpose());
    }
    for (const auto& lmi : prob.lmis) {
        MatrixXd F = sdp::evaluate(lmi, r.x);
        F -= eps * MatrixXd::Identity(F.rows(), F.cols());
        cs.lmis.push_back({lmi.family, sdp::max_eigenvalue(F)});
        if (cs.lmis.back().max_eig >= 0.0)
            throw SynthesisError("synthesis infeasible: " + lmi.family, lmi.family);
    }
    return cs;
}

// Multilinear interpolation weights of theta with respect to the box corners,
// in vertex_enumerate order. Coordinates with lo == hi give all weight to the
// lower corner.
inline VectorXd interpolate(const ThetaBox& box, const VectorXd& theta_in, double clamp_tol = 1e-9) {
    const int d = box.dim();
    if (theta_in.size() != d) throw Error("parameter dimension mismatch");
    VectorXd th = theta_in;
    for (int j = 0; j < d; ++j) {
        if (th(j) < box.lo(j) - clamp_tol || th(j) > box.hi(j) + clamp_tol)
            throw Error("parameter " + box.names[static_cast<std::size_t>(j)] + " outside its box");
        if (th(j) < box.lo(j) || th(j) > box.hi(j)) {
            warn("clamping parameter " + box.names[static_cast<std::size_t>(j)] + " into its box");
            th(j) = std::clamp(th(j), box.lo(j), box.hi(j));
        }
    }
    VectorXd w(d);
    for (int j = 0; j < d; ++j) {
        const double span = box.hi(j) - box.lo(j);
        w(j) = span > 0.0 ? (th(j) - box.lo(j)) / span : 0.0;
    }
    const std::size_t q = std::size_t{1} << d;
    VectorXd lam(static_cast<Eigen::Index>(q));
    for (std::size_t l = 0; l < q; ++l) {
        double prod = 1.0;
        for (int j = 0; j < d; ++j) prod *= ((l >> (d - 1 - j)) & 1U) ? w(j) : 1.0 - w(j);
        lam(static_cast<Eigen::Index>(l)) = prod;
    }
    return lam;
}

inline MatrixXd gain_at(const ControllerSet& cs, const VectorXd& theta) {
    const VectorXd lam = interpolate(cs.box, theta);
    MatrixXd K = MatrixXd::Zero(cs.K[0].rows(), cs.K[0].cols());
    for (Eigen::Index l = 0; l < lam.size(); ++l) K += lam(l) * cs.K[static_cast<std::size_t>(l)];
    return K;
}

// Closed loop from w to the matching error at frozen theta.
inline StateSpace closed_loop(const AugmentedSystem& aug, const MatrixXd& K, const VectorXd& theta) {
    const LpvMatrices M = aug.sys.at(theta);
    return {M.A + M.B * K, M.E, M.C + M.D * K, M.F};
}

struct ValidationSample {
    VectorXd theta;
    double brl_max_eig = 0.0;
    bool hurwitz = false;
    double hinf = 0.0;
    bool ok = false;
};

// Checks the interpolated controller at each sample: the bounded-real
// inequality with the common Q, stability, and the frozen-parameter peak gain
// against gamma.
inline std::vector<ValidationSample> brl_validate(const AugmentedSystem& aug, const ControllerSet& cs,
                                                  const std::vector<VectorXd>& samples, double gain_rel_tol = 1e-4) {
    std::vector<ValidationSample> out;
    const int nz = aug.states(), nw = aug.sys.exo_inputs(), p = aug.sys.outputs();
    for (const auto& th : samples) {
        ValidationSample s;
        s.theta = th;
        const MatrixXd K = gain_at(cs, th);
        const StateSpace cl = closed_loop(aug, K, th);
        const int N = nz + nw + p;
        MatrixXd F = MatrixXd::Zero(N, N);
        F.topLeftCorner(nz, nz) = cl.A * cs.Q + cs.Q * cl.A.transpose();
        F.block(nz, 0, nw, nz) = cl.B.transpose();
        F.block(nz + nw, 0, p, nz) = cl.C * cs.Q;
        F.block(nz + nw, nz, p, nw) = cl.D;
        F.block(nz, nz, nw + p, nw + p) = -cs.gamma * MatrixXd::Identity(nw + p, nw + p);
        F = detail::symmetrize_block(F);
        s.brl_max_eig = sdp::max_eigenvalue(F);
        s.hurwitz = is_hurwitz(cl.A);
        s.hinf = s.hurwitz ? hinf_norm(cl, 1e-7) : std::numeric_limits<double>::infinity();
        s.ok = s.brl_max_eig < 0.0 && s.hurwitz && s.hinf <= cs.gamma * (1.0 + gain_rel_tol);
        out.push_back(s);
    }
    return out;
}

}  // namespace dvpp
