#pragma once

#include "dvpp/adpf.hpp"
#include "dvpp/alloc.hpp"
#include "dvpp/errors.hpp"
#include "dvpp/plant.hpp"
#include "dvpp/synth.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dvpp {

enum class ChannelKind { fp = 0, vq = 1 };

inline const char* to_string(ChannelKind c) { return c == ChannelKind::fp ? "fp" : "vq"; }

// How the aggregate behavior is split among devices.
enum class Disaggregation { spf, dpf, adpf };

inline const char* to_string(Disaggregation d) {
    switch (d) {
        case Disaggregation::spf: return "spf";
        case Disaggregation::dpf: return "dpf";
        case Disaggregation::adpf: return "adpf";
    }
    return "?";
}

struct ChannelRole {
    bool active = false;
    ParticipationKind kind = ParticipationKind::lpf;
    double tau = 0.0;
    int degree = 1;
};

struct CapacityInterval {
    double lo = 0.0;       // MW
    double hi = 0.0;       // MW
    double nominal = 0.0;  // MW
};

struct DeviceSpec {
    std::string id;
    double rating = 0.0;  // MVA
    std::optional<HydroParams> hydro;  // response model of a fixed device
    ConverterParams converter;
    std::array<ChannelRole, 2> roles;
    std::optional<CapacityInterval> p_capacity;
    Tuning tuning;  // zeta indexed by the device's active channels in order

    bool fixed() const {
        return (roles[0].active && roles[0].kind == ParticipationKind::fixed) ||
               (roles[1].active && roles[1].kind == ParticipationKind::fixed);
    }
    const ChannelRole& role(ChannelKind c) const { return roles[static_cast<std::size_t>(c)]; }
};

struct FleetSpec {
    std::string name;
    double rating = 0.0;  // MVA, base of every pu quantity
    double tau_c = 0.0;
    std::array<std::optional<DesiredBehavior>, 2> desired;
    std::vector<DeviceSpec> devices;
    Disaggregation mode = Disaggregation::adpf;

    std::vector<ChannelKind> channels() const {
        std::vector<ChannelKind> c;
        if (desired[0]) c.push_back(ChannelKind::fp);
        if (desired[1]) c.push_back(ChannelKind::vq);
        return c;
    }
    int channel_input(ChannelKind c) const {
        const auto ch = channels();
        for (std::size_t k = 0; k < ch.size(); ++k)
            if (ch[k] == c) return static_cast<int>(k);
        return -1;
    }
    int device_index(const std::string& id) const {
        for (std::size_t i = 0; i < devices.size(); ++i)
            if (devices[i].id == id) return static_cast<int>(i);
        return -1;
    }
};

// One adaptive DC gain: the share of an lpf device in one channel.
struct ParamSlot {
    std::string name;
    int device = -1;
    ChannelKind channel = ChannelKind::fp;
    double lo = 0.0, hi = 0.0, nominal = 0.0;
};

// Capacities in DVPP pu. Active capacity of a device without an interval is 0;
// reactive capacity follows the converter current limit.
inline double p_capacity_pu(const FleetSpec& f, int dev, double p_mw) {
    (void)dev;
    return p_mw / f.rating;
}

inline double q_capacity_pu(const FleetSpec& f, int dev, double p_mw) {
    const double S = f.devices[static_cast<std::size_t>(dev)].rating;
    return S * q_capacity(std::clamp(p_mw / S, 0.0, 1.0)) / f.rating;
}

struct ChannelPlan {
    ChannelKind channel = ChannelKind::fp;
    std::vector<int> members;   // device indices in the order of `adpf`
    std::vector<Adpf> adpf;
    std::vector<int> lpf_slots; // parameter slots of lpf members
    std::vector<int> lpf_devices;
    double fixed_dc = 0.0;
};

struct DeviceDesign {
    int device = -1;
    std::vector<ChannelKind> channels;  // active channels, in output order
    std::vector<Adpf> adpm;             // per active channel
    StateSpace model;                   // fixed devices: response to w (DVPP pu)
    StateSpace plant;                   // controllable: scaled converter plant
    AffineLpv ref;
    AugmentedSystem aug;
    ControllerSet ctrl;
    bool controllable() const { return ctrl.K.size() > 0; }
};

struct FleetDesign {
    FleetSpec spec;
    double tau_c = 0.0;  // effective roll-off (0 in strict mode)
    std::vector<ParamSlot> slots;
    std::vector<ChannelPlan> plans;
    std::vector<DeviceDesign> devices;

    int nw() const { return static_cast<int>(spec.channels().size()); }

    VectorXd nominal_theta() const {
        VectorXd th(static_cast<int>(slots.size()));
        for (std::size_t j = 0; j < slots.size(); ++j) th(static_cast<int>(j)) = slots[j].nominal;
        return th;
    }

    const ChannelPlan* plan(ChannelKind c) const {
        for (const auto& p : plans)
            if (p.channel == c) return &p;
        return nullptr;
    }
};

namespace detail {

inline Adpf freeze(const Adpf& a, const VectorXd& th) {
    Adpf f = a;
    for (auto& t : f.terms) t.w = constant_weight(t.w.at(th), a.theta_dim);
    return f;
}

inline Adpf constant_adpf(const std::string& id, ParticipationKind kind, double c, int dim) {
    Adpf a;
    a.device = id;
    a.kind = kind;
    a.theta_dim = dim;
    if (c != 0.0) a.terms.push_back({constant_weight(c, dim), RationalTF::gain(1.0)});
    return a;
}

}  // namespace detail

// Capacity of every lpf device of a channel at the given active limits (MW).
inline VectorXd channel_capacity(const FleetSpec& f, const ChannelPlan& plan, const std::vector<double>& p_mw) {
    VectorXd y(static_cast<int>(plan.lpf_devices.size()));
    for (std::size_t k = 0; k < plan.lpf_devices.size(); ++k) {
        const int d = plan.lpf_devices[k];
        y(static_cast<int>(k)) = plan.channel == ChannelKind::fp ? p_capacity_pu(f, d, p_mw[static_cast<std::size_t>(d)])
                                                                 : q_capacity_pu(f, d, p_mw[static_cast<std::size_t>(d)]);
    }
    return y;
}

// Active capacity limits (MW) at the nominal, lower or upper end of every
// interval; devices without an interval report 0.
inline std::vector<double> capacity_point(const FleetSpec& f, int which) {
    std::vector<double> p(f.devices.size(), 0.0);
    for (std::size_t i = 0; i < f.devices.size(); ++i)
        if (const auto& c = f.devices[i].p_capacity) p[i] = which < 0 ? c->lo : which > 0 ? c->hi : c->nominal;
    return p;
}

// Participation factors of every channel plus the parameter layout. No
// controller synthesis happens here.
inline FleetDesign plan_fleet(const FleetSpec& f, bool strict = false) {
    FleetDesign d;
    d.spec = f;
    d.tau_c = strict ? 0.0 : f.tau_c;
    if (f.rating <= 0.0) throw ConfigError("rating_mva", "must be positive");
    if (f.channels().empty()) throw ConfigError("desired", "at least one channel is required");
    if (!strict && !(f.tau_c > 0.0)) throw ConfigError("tau_c", "must be positive");

    // Parameter slots, channel by channel.
    for (ChannelKind c : f.channels())
        for (std::size_t i = 0; i < f.devices.size(); ++i) {
            const auto& r = f.devices[i].role(c);
            if (r.active && r.kind == ParticipationKind::lpf)
                d.slots.push_back({f.devices[i].id + "_" + to_string(c), static_cast<int>(i), c, 0, 0, 0});
        }
    const int dim = static_cast<int>(d.slots.size());

    for (ChannelKind c : f.channels()) {
        ChannelPlan plan;
        plan.channel = c;
        const RationalTF Tdes = f.desired[static_cast<std::size_t>(c)]->tf();
        std::vector<ChannelMember> members;
        for (std::size_t i = 0; i < f.devices.size(); ++i) {
            const auto& dev = f.devices[i];
            const auto& r = dev.role(c);
            if (!r.active) continue;
            ChannelMember m{dev.id, r.kind, r.tau, r.degree, -1, {}};
            if (r.kind == ParticipationKind::fixed) {
                if (c != ChannelKind::fp || !dev.hydro)
                    throw ConfigError("devices." + dev.id, "fixed devices need a hydro model on the fp channel");
                m.model = (dev.rating / f.rating) * hydro_model(*dev.hydro);
            }
            if (r.kind == ParticipationKind::lpf) {
                for (int j = 0; j < dim; ++j)
                    if (d.slots[static_cast<std::size_t>(j)].device == static_cast<int>(i) &&
                        d.slots[static_cast<std::size_t>(j)].channel == c)
                        m.theta = j;
                plan.lpf_slots.push_back(m.theta);
                plan.lpf_devices.push_back(static_cast<int>(i));
            }
            plan.members.push_back(static_cast<int>(i));
            members.push_back(std::move(m));
        }
        if (members.empty()) throw ConfigError("devices", std::string("no device serves channel ") + to_string(c));
        plan.adpf = sort_algorithm(members, d.tau_c, Tdes, dim);
        for (std::size_t k = 0; k < members.size(); ++k)
            if (members[k].kind == ParticipationKind::fixed) plan.fixed_dc += plan.adpf[k].dc_gain(VectorXd::Zero(dim));
        if (plan.fixed_dc > 1.0 + 1e-12)
            throw ConfigError("devices", std::string("fixed devices exceed the DC gain of channel ") + to_string(c));

        // Parameter ranges from capacity intervals.
        if (!plan.lpf_devices.empty()) {
            for (int dv : plan.lpf_devices)
                if (c == ChannelKind::fp && !f.devices[static_cast<std::size_t>(dv)].p_capacity)
                    throw ConfigError("devices." + f.devices[static_cast<std::size_t>(dv)].id + ".capacity_mw",
                                      "lpf devices on the fp channel need a capacity interval");
            const VectorXd ylo = channel_capacity(f, plan, capacity_point(f, -1));
            const VectorXd yhi = channel_capacity(f, plan, capacity_point(f, 1));
            // Reactive capacity shrinks as active capacity grows.
            const VectorXd ymin = ylo.cwiseMin(yhi), ymax = ylo.cwiseMax(yhi);
            const auto [lo, hi] = allocation_bounds(ymin, ymax, plan.fixed_dc);
            const VectorXd nom = allocate(channel_capacity(f, plan, capacity_point(f, 0)), plan.fixed_dc);
            for (std::size_t k = 0; k < plan.lpf_slots.size(); ++k) {
                auto& s = d.slots[static_cast<std::size_t>(plan.lpf_slots[k])];
                s.lo = std::max(0.0, lo(static_cast<int>(k)));
                s.hi = std::min(1.0, hi(static_cast<int>(k)));
                s.nominal = nom(static_cast<int>(k));
            }
        }
        d.plans.push_back(std::move(plan));
    }

    // Static and frozen variants.
    const VectorXd nominal = d.nominal_theta();
    if (f.mode != Disaggregation::adpf) {
        for (auto& plan : d.plans) {
            if (f.mode == Disaggregation::dpf) {
                for (auto& a : plan.adpf) a = detail::freeze(a, nominal);
                continue;
            }
            const RationalTF Tdes = f.desired[static_cast<std::size_t>(plan.channel)]->tf();
            for (std::size_t k = 0; k < plan.adpf.size(); ++k) {
                auto& a = plan.adpf[k];
                double c = 0.0;
                if (a.kind == ParticipationKind::fixed) {
                    const int dv = plan.members[k];
                    c = (f.devices[static_cast<std::size_t>(dv)].rating / f.rating) *
                        hydro_model(*f.devices[static_cast<std::size_t>(dv)].hydro).dc_gain() / Tdes.dc_gain();
                } else if (a.kind == ParticipationKind::lpf) {
                    c = a.dc_gain(nominal);
                }
                a = detail::constant_adpf(a.device, a.kind, c, dim);
            }
        }
    }
    return d;
}

// Parameter box of a device: the slots its participation factors depend on.
inline ThetaBox device_box(const FleetDesign& d, const std::vector<Adpf>& adpm) {
    ThetaBox b;
    std::vector<int> used;
    for (std::size_t j = 0; j < d.slots.size(); ++j)
        for (const auto& a : adpm)
            for (const auto& t : a.terms)
                if (t.w.lin.size() > 0 && t.w.lin(static_cast<int>(j)) != 0.0 &&
                    std::find(used.begin(), used.end(), static_cast<int>(j)) == used.end())
                    used.push_back(static_cast<int>(j));
    std::sort(used.begin(), used.end());
    b.lo.resize(static_cast<int>(used.size()));
    b.hi.resize(static_cast<int>(used.size()));
    for (std::size_t k = 0; k < used.size(); ++k) {
        const auto& s = d.slots[static_cast<std::size_t>(used[k])];
        b.names.push_back(s.name);
        b.index.push_back(used[k]);
        b.lo(static_cast<int>(k)) = s.lo;
        b.hi(static_cast<int>(k)) = s.hi;
    }
    b.validate();
    return b;
}

// Reference models and augmented systems of every device, without
// controllers.
inline void assemble_devices(FleetDesign& d) {
    const FleetSpec& f = d.spec;
    const int nw = d.nw();
    d.devices.clear();
    for (std::size_t i = 0; i < f.devices.size(); ++i) {
        const auto& dev = f.devices[i];
        DeviceDesign dd;
        dd.device = static_cast<int>(i);
        std::vector<RationalTF> Tdes;
        std::vector<int> inputs;
        for (const auto& plan : d.plans)
            for (std::size_t k = 0; k < plan.members.size(); ++k)
                if (plan.members[k] == static_cast<int>(i)) {
                    dd.channels.push_back(plan.channel);
                    dd.adpm.push_back(plan.adpf[k]);
                    Tdes.push_back(f.desired[static_cast<std::size_t>(plan.channel)]->tf());
                    inputs.push_back(f.channel_input(plan.channel));
                }
        if (dd.channels.empty())
            throw ConfigError("devices." + dev.id, "device takes part in no channel of the desired behavior");
        dd.ref = reference_model_lpv(dd.adpm, Tdes, device_box(d, dd.adpm), inputs, nw);
        if (dev.fixed()) {
            if (dd.channels.size() != 1) throw ConfigError("devices." + dev.id, "fixed devices serve one channel");
            const StateSpace m = tf_to_ss((dev.rating / f.rating) * hydro_model(*dev.hydro));
            dd.model = {m.A, MatrixXd::Zero(m.states(), nw), m.C, MatrixXd::Zero(1, nw)};
            dd.model.B.col(inputs[0]) = m.B;
            dd.model.D(0, inputs[0]) = m.D(0, 0);
        } else {
            const double k = dev.rating / f.rating;
            if (dd.channels.size() == 2) {
                dd.plant = scale_output(converter_plant(dev.converter, Axes::dq), k);
            } else {
                dd.plant = scale_output(converter_plant(dev.converter, Axes::d_only), k);
                if (dd.channels[0] == ChannelKind::vq) dd.plant.C *= -1.0;
            }
            dd.aug = augment(dd.plant, dd.ref);
        }
        d.devices.push_back(std::move(dd));
    }
}

// Full design: participation factors, reference models and one controller set
// per controllable device.
inline FleetDesign design_fleet(const FleetSpec& f, bool strict = false, const SynthesisOptions& opt = {}) {
    FleetDesign d = plan_fleet(f, strict);
    assemble_devices(d);
    for (auto& dd : d.devices) {
        const auto& dev = f.devices[static_cast<std::size_t>(dd.device)];
        if (dev.fixed()) continue;
        Tuning t = dev.tuning;
        if (t.zeta.size() != 0 && t.zeta.size() != dd.aug.n_sigma)
            throw ConfigError("devices." + dev.id + ".tuning.zeta", "one bound per active channel is required");
        try {
            dd.ctrl = synthesize(dd.aug, t, opt);
        } catch (const SynthesisError& e) {
            throw SynthesisError(dev.id + ": " + e.what(), e.family());
        }
    }
    return d;
}

}  // namespace dvpp
