#pragma once

#include "dvpp/alloc.hpp"
#include "dvpp/errors.hpp"
#include "dvpp/fleet.hpp"
#include "dvpp/state_space.hpp"
#include "dvpp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dvpp {

enum class SignalKind { df, dv, load_p, load_q };
enum class AdaptationMode { none, centralized, consensus };
enum class Integrator { zoh, rk4 };

// Step of size `value` added to a signal from `time` on.
struct StepEvent {
    SignalKind signal = SignalKind::df;
    double time = 0.0;
    double value = 0.0;
};

struct CapacityEvent {
    double time = 0.0;
    int device = -1;
    double p_max = 0.0;  // MW
};

struct GridSurrogate {
    bool enabled = false;
    double H = 4.0;
    double D_load = 1.0;
    double v_sens = 0.05;
};

struct Scenario {
    std::string name = "scenario";
    double dt = 1e-3;
    double horizon = 10.0;
    std::vector<StepEvent> steps;
    std::vector<CapacityEvent> capacity;
    AdaptationMode adaptation = AdaptationMode::none;
    std::vector<std::pair<int, int>> graph;  // device index pairs
    GridSurrogate grid;
    bool clamp = true;
    Integrator integrator = Integrator::zoh;
    int rk4_substeps = 0;  // 0 picks a count from the fastest mode
};

struct SimTrace {
    std::vector<std::string> devices, params;
    std::vector<double> t, df, dv, dp_agg, dq_agg, dp_des, dq_des;
    MatrixXd dp, dq, dp_ref, dq_ref, eps, theta;
    std::vector<double> fp_dc_sum;  // sum of fp participation DC gains

    std::size_t size() const { return t.size(); }
};

struct Metrics {
    double nadir = 0.0;
    double settling_time = 0.0;
    bool settled = false;
    double steady_state_deviation = 0.0;
    std::vector<double> rms_matching_error;
    double rms_aggregate_error = 0.0;
};

namespace detail {

inline double signal_at(const std::vector<StepEvent>& ev, SignalKind k, double t) {
    double v = 0.0;
    for (const auto& e : ev)
        if (e.signal == k && t >= e.time - 1e-12) v += e.value;
    return v;
}

// Exact discrete propagator for x' = A x + B w with w held over a step.
struct Propagator {
    MatrixXd Phi, Gamma;
    void build(const MatrixXd& A, const MatrixXd& B, double dt) {
        if (A.rows() == 0) {
            Phi.resize(0, 0);
            Gamma.resize(0, B.cols());
            return;
        }
        zoh(A, B, dt, Phi, Gamma);
    }
    void step(VectorXd& x, const VectorXd& w) const {
        if (x.size() == 0) return;
        x = Phi * x + Gamma * w;
    }
};

inline VectorXd rk4(const MatrixXd& A0, const MatrixXd& Am, const MatrixXd& A1, const MatrixXd& B0,
                    const MatrixXd& Bm, const MatrixXd& B1, const VectorXd& x, const VectorXd& w, double h) {
    const VectorXd k1 = A0 * x + B0 * w;
    const VectorXd k2 = Am * (x + 0.5 * h * k1) + Bm * w;
    const VectorXd k3 = Am * (x + 0.5 * h * k2) + Bm * w;
    const VectorXd k4 = A1 * (x + h * k3) + B1 * w;
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct DeviceState {
    VectorXd z;       // controllable: augmented state; fixed: model state
    VectorXd xr;      // fixed devices: reference state
    VectorXd theta;   // local parameters in use
    MatrixXd K;
    Propagator prop, ref_prop;
    bool prop_valid = false;
};

}  // namespace detail

// Closed-loop simulation of a designed fleet. Every device sees the same
// (df, dv) signal; the optional grid surrogate closes the loop through a swing
// equation and a static voltage sensitivity.
inline SimTrace simulate(const FleetDesign& d, const Scenario& sc) {
    const FleetSpec& f = d.spec;
    if (!(sc.dt > 0.0) || !(sc.horizon > 0.0)) throw ConfigError("scenario", "dt and horizon must be positive");
    if (sc.grid.enabled && (!(sc.grid.H > 0.0) || !(sc.grid.D_load > 0.0)))
        throw ConfigError("scenario.grid", "H_g and D_load must be positive");
    const int nd = static_cast<int>(d.devices.size());
    const int np = static_cast<int>(d.slots.size());
    const int nw = d.nw();
    const int ifp = f.channel_input(ChannelKind::fp), ivq = f.channel_input(ChannelKind::vq);
    const double dt = sc.dt;
    const long steps = std::lround(sc.horizon / dt);

    // Capacities and parameters.
    std::vector<double> p_mw = capacity_point(f, 0);
    VectorXd theta = d.nominal_theta();
    std::vector<CapacityEvent> events = sc.capacity;
    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    for (const auto& e : events)
        if (e.device < 0 || e.device >= nd) throw ConfigError("scenario.capacity_events", "unknown device");

    const bool adaptive = f.mode == Disaggregation::adpf && sc.adaptation != AdaptationMode::none;
    std::vector<std::optional<ConsensusFilter>> filters(d.plans.size());
    if (adaptive && sc.adaptation == AdaptationMode::consensus) {
        for (std::size_t c = 0; c < d.plans.size(); ++c) {
            const auto& plan = d.plans[c];
            if (plan.lpf_devices.size() < 2) continue;
            CommGraph g;
            g.n = static_cast<int>(plan.lpf_devices.size());
            auto local = [&](int dev) {
                for (std::size_t k = 0; k < plan.lpf_devices.size(); ++k)
                    if (plan.lpf_devices[k] == dev) return static_cast<int>(k);
                return -1;
            };
            for (auto [a, b] : sc.graph) {
                const int la = local(a), lb = local(b);
                if (la >= 0 && lb >= 0) g.edges.emplace_back(la, lb);
            }
            filters[c].emplace(g, dt);
            VectorXd th(g.n);
            for (int k = 0; k < g.n; ++k) th(k) = theta(plan.lpf_slots[static_cast<std::size_t>(k)]);
            filters[c]->set_capacity(channel_capacity(f, plan, p_mw), th);
        }
    }

    // Device states.
    std::vector<detail::DeviceState> st(static_cast<std::size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        const auto& dd = d.devices[static_cast<std::size_t>(i)];
        auto& s = st[static_cast<std::size_t>(i)];
        if (dd.controllable()) {
            s.z = VectorXd::Zero(dd.aug.states());
        } else {
            s.z = VectorXd::Zero(dd.model.states());
            s.xr = VectorXd::Zero(dd.ref.states());
            s.prop.build(dd.model.A, dd.model.B, dt);
            const LpvMatrices r = dd.ref.at(VectorXd::Zero(dd.ref.box.dim()));
            s.ref_prop.build(r.A, r.E, dt);
        }
    }
    // Desired aggregate behavior driven by the same signals.
    std::vector<StateSpace> des(2);
    std::vector<VectorXd> xdes(2);
    std::vector<detail::Propagator> des_prop(2);
    for (ChannelKind c : f.channels()) {
        const auto k = static_cast<std::size_t>(c);
        des[k] = tf_to_ss(f.desired[k]->tf());
        xdes[k] = VectorXd::Zero(des[k].states());
        des_prop[k].build(des[k].A, des[k].B, dt);
    }

    auto device_error = [&](int i, const std::string& what) {
        return SimulationError("device " + f.devices[static_cast<std::size_t>(i)].id + ": " + what);
    };
    auto local_theta = [&](int i, const VectorXd& th) {
        const auto& box = d.devices[static_cast<std::size_t>(i)].ref.box;
        VectorXd l = box.local(th);
        for (int j = 0; j < box.dim(); ++j)
            if (l(j) < box.lo(j) - 1e-9 || l(j) > box.hi(j) + 1e-9)
                throw device_error(i, "parameter " + box.names[static_cast<std::size_t>(j)] + " left its box");
        return l;
    };
    auto closed_loop_at = [&](int i, const VectorXd& lth, MatrixXd& Acl, MatrixXd& E) {
        const auto& dd = d.devices[static_cast<std::size_t>(i)];
        const LpvMatrices M = dd.aug.sys.at(lth);
        const MatrixXd K = gain_at(dd.ctrl, lth);
        Acl = M.A + M.B * K;
        E = M.E;
        return K;
    };

    SimTrace tr;
    for (const auto& dv : f.devices) tr.devices.push_back(dv.id);
    for (const auto& s : d.slots) tr.params.push_back(s.name);
    const auto ns = static_cast<Eigen::Index>(steps + 1);
    tr.dp = tr.dq = tr.dp_ref = tr.dq_ref = tr.eps = MatrixXd::Zero(ns, nd);
    tr.theta = MatrixXd::Zero(ns, np);

    double fgrid = 0.0;
    std::size_t next_event = 0;
    const double a_grid = sc.grid.enabled ? -sc.grid.D_load / (2.0 * sc.grid.H) : 0.0;

    auto fp_dc = [&](const VectorXd& th) {
        const ChannelPlan* p = d.plan(ChannelKind::fp);
        if (!p) return 0.0;
        double s = 0.0;
        for (const auto& a : p->adpf) s += a.dc_gain(th);
        return s;
    };

    for (long k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;

        // Capacity events and adaptation.
        bool reallocated = false;
        while (next_event < events.size() && events[next_event].time <= t + 1e-12) {
            const auto& e = events[next_event++];
            p_mw[static_cast<std::size_t>(e.device)] = e.p_max;
            reallocated = true;
        }
        if (reallocated && adaptive) {
            for (std::size_t c = 0; c < d.plans.size(); ++c) {
                const auto& plan = d.plans[c];
                if (plan.lpf_devices.empty()) continue;
                const VectorXd y = channel_capacity(f, plan, p_mw);
                VectorXd th(static_cast<int>(plan.lpf_slots.size()));
                for (std::size_t j = 0; j < plan.lpf_slots.size(); ++j) th(static_cast<int>(j)) = theta(plan.lpf_slots[j]);
                if (sc.adaptation == AdaptationMode::centralized || !filters[c]) th = allocate(y, plan.fixed_dc);
                else filters[c]->set_capacity(y, th);
                for (std::size_t j = 0; j < plan.lpf_slots.size(); ++j) theta(plan.lpf_slots[j]) = th(static_cast<int>(j));
            }
        }
        // Consensus moves theta every step; the next value is needed for the
        // within-step parameter path.
        VectorXd theta_next = theta;
        if (adaptive && sc.adaptation == AdaptationMode::consensus) {
            for (std::size_t c = 0; c < d.plans.size(); ++c) {
                if (!filters[c]) continue;
                const auto& plan = d.plans[c];
                VectorXd th(static_cast<int>(plan.lpf_slots.size()));
                for (std::size_t j = 0; j < plan.lpf_slots.size(); ++j) th(static_cast<int>(j)) = theta(plan.lpf_slots[j]);
                filters[c]->step(th);
                for (std::size_t j = 0; j < plan.lpf_slots.size(); ++j)
                    theta_next(plan.lpf_slots[j]) = th(static_cast<int>(j));
            }
        }

        // Outputs at t from the current states.
        VectorXd w = VectorXd::Zero(nw);
        double dq_dist = detail::signal_at(sc.steps, SignalKind::load_q, t);
        double dp_dist = detail::signal_at(sc.steps, SignalKind::load_p, t);
        if (ifp >= 0) w(ifp) = sc.grid.enabled ? fgrid : detail::signal_at(sc.steps, SignalKind::df, t);

        VectorXd dp = VectorXd::Zero(nd), dq = VectorXd::Zero(nd), pref = VectorXd::Zero(nd), qref = VectorXd::Zero(nd);
        std::vector<MatrixXd> Ksave(static_cast<std::size_t>(nd));
        for (int i = 0; i < nd; ++i) {
            const auto& dd = d.devices[static_cast<std::size_t>(i)];
            auto& s = st[static_cast<std::size_t>(i)];
            if (!dd.controllable()) continue;
            const VectorXd lth = local_theta(i, theta);
            if (!s.prop_valid || lth != s.theta) {
                MatrixXd Acl, E;
                s.K = closed_loop_at(i, lth, Acl, E);
                s.theta = lth;
                if (sc.integrator == Integrator::zoh) s.prop.build(Acl, E, dt);
                s.prop_valid = true;
            }
            const VectorXd y = dd.plant.C * s.z.head(dd.aug.n_plant) + dd.plant.D * (s.K * s.z);
            for (std::size_t c = 0; c < dd.channels.size(); ++c) {
                const auto r = static_cast<Eigen::Index>(c);
                double val = y(r);
                const auto& dev = f.devices[static_cast<std::size_t>(i)];
                if (sc.clamp && dd.channels[c] == ChannelKind::fp && dev.p_capacity) {
                    const double cap = p_capacity_pu(f, i, p_mw[static_cast<std::size_t>(i)]);
                    val = std::clamp(val, -cap, cap);
                }
                (dd.channels[c] == ChannelKind::fp ? dp(i) : dq(i)) = val;
            }
        }
        for (int i = 0; i < nd; ++i) {
            const auto& dd = d.devices[static_cast<std::size_t>(i)];
            if (dd.controllable()) continue;
            const auto& s = st[static_cast<std::size_t>(i)];
            const double y = (dd.model.C * s.z)(0) + (dd.model.D * w)(0);
            (dd.channels[0] == ChannelKind::fp ? dp(i) : dq(i)) = y;
        }
        const double qagg = dq.sum();
        if (ivq >= 0)
            w(ivq) = sc.grid.enabled ? sc.grid.v_sens * (qagg - dq_dist) : detail::signal_at(sc.steps, SignalKind::dv, t);

        MatrixXd epsrow = MatrixXd::Zero(1, nd);
        for (int i = 0; i < nd; ++i) {
            const auto& dd = d.devices[static_cast<std::size_t>(i)];
            auto& s = st[static_cast<std::size_t>(i)];
            VectorXd yr;
            if (dd.controllable()) {
                const LpvMatrices M = dd.ref.at(s.theta);
                yr = M.C * s.z.segment(dd.aug.n_plant, dd.aug.n_ref) + M.F * w;
            } else {
                const LpvMatrices M = dd.ref.at(VectorXd::Zero(dd.ref.box.dim()));
                yr = M.C * s.xr + M.F * w;
            }
            for (std::size_t c = 0; c < dd.channels.size(); ++c)
                (dd.channels[c] == ChannelKind::fp ? pref(i) : qref(i)) = yr(static_cast<Eigen::Index>(c));
            const ChannelKind main = dd.channels[0];
            epsrow(0, i) = main == ChannelKind::fp ? dp(i) - pref(i) : dq(i) - qref(i);
        }

        tr.t.push_back(t);
        tr.df.push_back(ifp >= 0 ? w(ifp) : 0.0);
        tr.dv.push_back(ivq >= 0 ? w(ivq) : 0.0);
        double sp = 0.0, sq = 0.0;
        for (int i = 0; i < nd; ++i) {
            sp += dp(i);
            sq += dq(i);
        }
        tr.dp_agg.push_back(sp);
        tr.dq_agg.push_back(sq);
        for (ChannelKind c : f.channels()) {
            const auto kk = static_cast<std::size_t>(c);
            const VectorXd wi = w.segment(f.channel_input(c), 1);
            const double v = (des[kk].C * xdes[kk])(0) + (des[kk].D * wi)(0);
            (c == ChannelKind::fp ? tr.dp_des : tr.dq_des).push_back(v);
        }
        if (ifp < 0) tr.dp_des.push_back(0.0);
        if (ivq < 0) tr.dq_des.push_back(0.0);
        tr.dp.row(k) = dp.transpose();
        tr.dq.row(k) = dq.transpose();
        tr.dp_ref.row(k) = pref.transpose();
        tr.dq_ref.row(k) = qref.transpose();
        tr.eps.row(k) = epsrow;
        if (np > 0) tr.theta.row(k) = theta.transpose();
        tr.fp_dc_sum.push_back(fp_dc(theta));
        if (k == steps) break;

        // Advance every state over [t, t + dt] with w held.
        const bool moving = np > 0 && theta_next != theta;
        for (int i = 0; i < nd; ++i) {
            const auto& dd = d.devices[static_cast<std::size_t>(i)];
            auto& s = st[static_cast<std::size_t>(i)];
            if (!dd.controllable()) {
                s.prop.step(s.z, w);
                s.ref_prop.step(s.xr, w);
                continue;
            }
            const VectorXd lnext = dd.ref.box.dim() > 0 ? local_theta(i, theta_next) : VectorXd();
            const bool dev_moving = moving && dd.ref.box.dim() > 0 && lnext != s.theta;
            if (sc.integrator == Integrator::zoh && !dev_moving) {
                s.prop.step(s.z, w);
            } else {
                MatrixXd A0, E0, Am, Em, A1, E1;
                closed_loop_at(i, s.theta, A0, E0);
                const VectorXd lmid = dev_moving ? VectorXd(0.5 * (s.theta + lnext)) : s.theta;
                const VectorXd lend = dev_moving ? lnext : s.theta;
                closed_loop_at(i, lmid, Am, Em);
                closed_loop_at(i, lend, A1, E1);
                int nsub = sc.rk4_substeps;
                if (nsub <= 0) nsub = std::max(1, static_cast<int>(std::ceil(spectral_radius(A0) * dt / 0.5)));
                const double h = dt / nsub;
                for (int j = 0; j < nsub; ++j) {
                    // Parameter path is linear over the step.
                    const double a0 = static_cast<double>(j) / nsub, a1 = static_cast<double>(j + 1) / nsub;
                    const double am = 0.5 * (a0 + a1);
                    auto mix = [&](const MatrixXd& X0, const MatrixXd& Xm, const MatrixXd& X1, double a) {
                        // Quadratic interpolation through start, middle and end.
                        const double l0 = 2.0 * (a - 0.5) * (a - 1.0), lm = -4.0 * a * (a - 1.0), l1 = 2.0 * a * (a - 0.5);
                        return MatrixXd(l0 * X0 + lm * Xm + l1 * X1);
                    };
                    s.z = detail::rk4(mix(A0, Am, A1, a0), mix(A0, Am, A1, am), mix(A0, Am, A1, a1), mix(E0, Em, E1, a0),
                                      mix(E0, Em, E1, am), mix(E0, Em, E1, a1), s.z, w, h);
                }
            }
            if (!s.z.allFinite() || s.z.norm() > 1e6) throw device_error(i, "closed loop diverged");
        }
        for (ChannelKind c : f.channels()) {
            const auto kk = static_cast<std::size_t>(c);
            des_prop[kk].step(xdes[kk], w.segment(f.channel_input(c), 1));
        }
        if (sc.grid.enabled) {
            const double u = (sp - dp_dist) / (2.0 * sc.grid.H);
            const double e = std::exp(a_grid * dt);
            fgrid = e * fgrid + (e - 1.0) / a_grid * u;
            if (!std::isfinite(fgrid) || std::abs(fgrid) > 1e6) throw SimulationError("grid surrogate diverged");
        }
        theta = theta_next;
    }
    return tr;
}

// Response metrics of the frequency (closed grid) or the aggregate power
// (open loop).
inline Metrics metrics(const SimTrace& tr, bool use_frequency) {
    if (tr.size() == 0) throw Error("empty trace");
    Metrics m;
    const auto& x = use_frequency ? tr.df : tr.dp_agg;
    m.nadir = *std::min_element(x.begin(), x.end());
    const double final = x.back();
    m.steady_state_deviation = final;
    const double size = std::abs(final - x.front());
    const double band = 0.02 * (size > 0.0 ? size : 1.0);
    m.settling_time = 0.0;
    for (std::size_t k = x.size(); k-- > 0;)
        if (std::abs(x[k] - final) > band) {
            m.settling_time = tr.t[k + 1];
            break;
        }
    // Settled when the last tenth of the horizon already lies inside the band;
    // otherwise the final value is not a steady state.
    const double t_tail = tr.t.back() - 0.1 * (tr.t.back() - tr.t.front());
    m.settled = m.settling_time <= t_tail;
    const auto n = static_cast<double>(tr.size());
    for (Eigen::Index i = 0; i < tr.eps.cols(); ++i) m.rms_matching_error.push_back(std::sqrt(tr.eps.col(i).squaredNorm() / n));
    double agg = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
        const double e = tr.dp_agg[k] - tr.dp_ref.row(static_cast<Eigen::Index>(k)).sum();
        agg += e * e;
    }
    m.rms_aggregate_error = std::sqrt(agg / n);
    return m;
}

}  // namespace dvpp
