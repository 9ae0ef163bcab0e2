#pragma once

#include "dvpp/errors.hpp"
#include "dvpp/lpv.hpp"
#include "dvpp/rational_tf.hpp"
#include "dvpp/state_space.hpp"

#include <algorithm>
#include <complex>
#include <string>
#include <vector>

namespace dvpp {

enum class ParticipationKind { fixed, lpf, bpf, hpf };

inline const char* to_string(ParticipationKind k) {
    switch (k) {
        case ParticipationKind::fixed: return "fixed";
        case ParticipationKind::lpf: return "lpf";
        case ParticipationKind::bpf: return "bpf";
        case ParticipationKind::hpf: return "hpf";
    }
    return "?";
}

// c0 + lin . theta over the fleet-wide parameter vector.
struct AffineWeight {
    double c0 = 0.0;
    VectorXd lin;

    double at(const VectorXd& th) const { return lin.size() == 0 ? c0 : c0 + lin.dot(th); }
    bool is_constant() const { return lin.size() == 0 || lin.isZero(0.0); }
    AffineWeight operator-() const { return {-c0, -lin}; }
};

struct AdpfTerm {
    AffineWeight w;
    RationalTF tf;
};

// Participation factor as a weighted sum of fixed rational terms whose weights
// are affine in the parameter vector.
struct Adpf {
    std::string device;
    ParticipationKind kind = ParticipationKind::fixed;
    int theta_dim = 0;
    std::vector<AdpfTerm> terms;

    std::complex<double> operator()(std::complex<double> s, const VectorXd& th) const {
        std::complex<double> acc = 0.0;
        for (const auto& t : terms) acc += t.w.at(th) * t.tf(s);
        return acc;
    }

    // Single rational function at frozen parameters (not reduced).
    RationalTF at(const VectorXd& th) const {
        RationalTF r;
        for (const auto& t : terms) {
            const double w = t.w.at(th);
            if (w != 0.0) r = r + w * t.tf;
        }
        return r;
    }

    double dc_gain(const VectorXd& th) const {
        double acc = 0.0;
        for (const auto& t : terms) acc += t.w.at(th) * t.tf.dc_gain();
        return acc;
    }

    bool depends_on_theta() const {
        return std::any_of(terms.begin(), terms.end(), [](const AdpfTerm& t) { return !t.w.is_constant(); });
    }
};

inline AffineWeight constant_weight(double c, int dim) { return {c, VectorXd::Zero(dim)}; }

// Participation of a device whose response cannot be shaped: its own
// transfer function divided by the desired one.
inline Adpf fixed_adpf(const RationalTF& T_i, const RationalTF& T_des, int theta_dim = 0,
                       const std::string& id = {}) {
    const RationalTF m = (T_i * T_des.inv()).minimal();
    if (!m.is_proper()) throw Error("fixed device faster than desired behavior");
    Adpf a;
    a.device = id;
    a.kind = ParticipationKind::fixed;
    a.theta_dim = theta_dim;
    a.terms.push_back({constant_weight(1.0, theta_dim), m});
    return a;
}

struct ChannelMember {
    std::string id;
    ParticipationKind kind = ParticipationKind::lpf;
    double tau = 0.0;
    int degree = 1;
    int theta = -1;     // slot in the parameter vector (lpf only)
    RationalTF model;   // device transfer function (fixed only)
};

// Builds the participation factors of one channel. LPF and fixed members come
// first, then band-pass members from slow to fast, and the high-pass member
// takes whatever remains below the roll-off 1/(tau_c s + 1). Results follow the
// input order.
inline std::vector<Adpf> sort_algorithm(const std::vector<ChannelMember>& members, double tau_c,
                                        const RationalTF& T_des, int theta_dim) {
    const int n = static_cast<int>(members.size());
    std::vector<int> fixed_lpf, bpf, hpf;
    for (int i = 0; i < n; ++i) {
        const auto& m = members[static_cast<std::size_t>(i)];
        switch (m.kind) {
            case ParticipationKind::fixed: fixed_lpf.push_back(i); break;
            case ParticipationKind::lpf:
                if (m.theta < 0 || m.theta >= theta_dim) throw Error("lpf member " + m.id + " has no parameter slot");
                if (m.tau < 0.0) throw Error("negative time constant for " + m.id);
                fixed_lpf.push_back(i);
                break;
            case ParticipationKind::bpf:
                if (m.tau <= 0.0) throw Error("bpf member " + m.id + " needs a positive time constant");
                if (m.degree < 0) throw Error("bpf degree must be non-negative for " + m.id);
                bpf.push_back(i);
                break;
            case ParticipationKind::hpf: hpf.push_back(i); break;
        }
    }
    if (hpf.size() > 1) throw Error("more than one hpf member in channel");
    if (hpf.empty()) {
        // Without a high-pass member the roll-off has to be met by the low-pass
        // members themselves.
        const bool ok = bpf.empty() && std::all_of(members.begin(), members.end(), [&](const ChannelMember& m) {
                            return m.kind == ParticipationKind::lpf && std::abs(m.tau - tau_c) <= 1e-12 * (1.0 + tau_c);
                        });
        if (!ok) throw Error("missing hpf member in channel");
    }
    std::stable_sort(bpf.begin(), bpf.end(), [&](int a, int b) {
        const auto& ma = members[static_cast<std::size_t>(a)];
        const auto& mb = members[static_cast<std::size_t>(b)];
        if (ma.tau != mb.tau) return ma.tau > mb.tau;
        return ma.id < mb.id;
    });

    std::vector<Adpf> out(static_cast<std::size_t>(n));
    std::vector<AdpfTerm> previous;
    double slowest_band = std::numeric_limits<double>::infinity();
    for (int i : fixed_lpf) {
        const auto& m = members[static_cast<std::size_t>(i)];
        Adpf a;
        if (m.kind == ParticipationKind::fixed) {
            a = fixed_adpf(m.model, T_des, theta_dim, m.id);
        } else {
            a.device = m.id;
            a.kind = ParticipationKind::lpf;
            a.theta_dim = theta_dim;
            AffineWeight w = constant_weight(0.0, theta_dim);
            w.lin(m.theta) = 1.0;
            a.terms.push_back({w, RationalTF::first_order(1.0, m.tau)});
            slowest_band = std::min(slowest_band, m.tau);
        }
        previous.insert(previous.end(), a.terms.begin(), a.terms.end());
        out[static_cast<std::size_t>(i)] = std::move(a);
    }
    for (int i : bpf) {
        const auto& m = members[static_cast<std::size_t>(i)];
        if (previous.empty()) throw Error("infeasible participation order: bpf " + m.id + " has nothing to complement");
        if (m.tau >= slowest_band) throw Error("infeasible participation order: bpf " + m.id + " is not faster than earlier members");
        const RationalTF lag = RationalTF::first_order(1.0, m.tau);
        const RationalTF lag_d = lag.pow(m.degree);
        Adpf a;
        a.device = m.id;
        a.kind = ParticipationKind::bpf;
        a.theta_dim = theta_dim;
        a.terms.push_back({constant_weight(1.0, theta_dim), lag_d * lag});
        for (const auto& t : previous) a.terms.push_back({-t.w, lag_d * t.tf});
        previous.insert(previous.end(), a.terms.begin(), a.terms.end());
        slowest_band = m.tau;
        out[static_cast<std::size_t>(i)] = std::move(a);
    }
    for (int i : hpf) {
        const auto& m = members[static_cast<std::size_t>(i)];
        Adpf a;
        a.device = m.id;
        a.kind = ParticipationKind::hpf;
        a.theta_dim = theta_dim;
        a.terms.push_back({constant_weight(1.0, theta_dim), RationalTF::first_order(1.0, tau_c)});
        for (const auto& t : previous) a.terms.push_back({-t.w, t.tf});
        out[static_cast<std::size_t>(i)] = std::move(a);
    }
    return out;
}

// Largest deviation of the summed participation factors from the roll-off
// 1/(tau_c s + 1) over the grid. With tau_c = 0 this is the deviation from one.
inline double participation_residual(const std::vector<Adpf>& channel, const VectorXd& th, double tau_c,
                                     const FreqGrid& grid) {
    double worst = 0.0;
    for (double w : grid.omega) {
        const std::complex<double> s{0.0, w};
        std::complex<double> sum = 0.0;
        for (const auto& a : channel) sum += a(s, th);
        worst = std::max(worst, std::abs(sum - 1.0 / (tau_c * s + 1.0)));
    }
    return worst;
}

namespace detail {

inline void append_block(LpvMatrices& m, const StateSpace& blk, int channel, int nw) {
    const int n0 = static_cast<int>(m.A.rows()), nb = blk.states(), p = static_cast<int>(m.C.rows());
    LpvMatrices r = LpvMatrices::zeros(n0 + nb, static_cast<int>(m.B.cols()), nw, p);
    r.A.topLeftCorner(n0, n0) = m.A;
    r.A.bottomRightCorner(nb, nb) = blk.A;
    r.E.topRows(n0) = m.E;
    r.E.block(n0, channel, nb, 1) = blk.B;
    r.C.leftCols(n0) = m.C;
    r.F = m.F;
    m = std::move(r);
}

inline StateSpace realize_balanced(const RationalTF& g) {
    return balance(tf_to_ss(g.minimal()));
}

}  // namespace detail

// Parallel bank realizing m_k(s, theta) * T_des_k(s) for every channel k of a
// device. Parameter-free terms share one reduced block; each parameter-dependent
// term gets its own block so that only the output map varies with theta.
// Channel k reads exogenous input channel_input[k] out of nw inputs.
inline AffineLpv reference_model_lpv(const std::vector<Adpf>& adpm, const std::vector<RationalTF>& T_des,
                                     const ThetaBox& box, const std::vector<int>& channel_input, int nw) {
    box.validate();
    const int p = static_cast<int>(adpm.size());
    if (static_cast<int>(T_des.size()) != p || static_cast<int>(channel_input.size()) != p)
        throw Error("reference model channel count mismatch");
    const int d = box.dim();
    AffineLpv sys;
    sys.box = box;
    sys.base = LpvMatrices::zeros(0, 0, nw, p);

    struct Pending {
        int channel;
        StateSpace blk;
        VectorXd theta_gain;  // local coordinates
        double c0;
    };
    std::vector<Pending> blocks;

    for (int k = 0; k < p; ++k) {
        const Adpf& a = adpm[static_cast<std::size_t>(k)];
        StateSpace constant_part;
        bool have_constant = false;
        for (const auto& t : a.terms) {
            VectorXd g = VectorXd::Zero(d);
            if (!t.w.is_constant()) {
                VectorXd rest = t.w.lin;
                for (int j = 0; j < d; ++j) {
                    const int gi = box.index[static_cast<std::size_t>(j)];
                    g(j) = rest(gi);
                    rest(gi) = 0.0;
                }
                if (!rest.isZero(0.0))
                    throw Error("non-affine participation: weight of " + a.device +
                                " depends on parameters outside its box");
            }
            const RationalTF prod = t.tf * T_des[static_cast<std::size_t>(k)];
            if (prod.is_zero()) continue;
            if (g.isZero(0.0)) {
                if (t.w.c0 == 0.0) continue;
                StateSpace s = tf_to_ss((t.w.c0 * prod).minimal());
                constant_part = have_constant ? parallel(constant_part, s) : s;
                have_constant = true;
            } else {
                blocks.push_back({k, detail::realize_balanced(prod), g, t.w.c0});
            }
        }
        if (have_constant) blocks.push_back({k, balance(constant_part), VectorXd::Zero(d), 1.0});
    }

    sys.inc.assign(static_cast<std::size_t>(d), LpvMatrices::zeros(0, 0, nw, p));
    for (const auto& b : blocks) {
        const int ch = channel_input[static_cast<std::size_t>(b.channel)];
        const int n0 = sys.states(), nb = b.blk.states();
        detail::append_block(sys.base, b.blk, ch, nw);
        sys.base.C.block(b.channel, n0, 1, nb) = b.c0 * b.blk.C;
        sys.base.F(b.channel, ch) += b.c0 * b.blk.D(0, 0);
        for (int j = 0; j < d; ++j) {
            auto& inc = sys.inc[static_cast<std::size_t>(j)];
            const int m0 = static_cast<int>(inc.A.rows());
            StateSpace zero_blk{MatrixXd::Zero(nb, nb), MatrixXd::Zero(nb, 1), MatrixXd::Zero(1, nb), MatrixXd::Zero(1, 1)};
            detail::append_block(inc, zero_blk, ch, nw);
            inc.C.block(b.channel, m0, 1, nb) = b.theta_gain(j) * b.blk.C;
            inc.F(b.channel, ch) += b.theta_gain(j) * b.blk.D(0, 0);
        }
    }
    return sys;
}

inline std::vector<VectorXd> box_vertices(const ThetaBox& box) {
    const int d = box.dim();
    if (d > 12) throw Error("vertex explosion");
    const std::size_t q = std::size_t{1} << d;
    std::vector<VectorXd> v(q, VectorXd(d));
    // Lexicographic corner order: the first coordinate varies slowest.
    for (std::size_t l = 0; l < q; ++l)
        for (int j = 0; j < d; ++j) v[l](j) = ((l >> (d - 1 - j)) & 1U) ? box.hi(j) : box.lo(j);
    return v;
}

}  // namespace dvpp
