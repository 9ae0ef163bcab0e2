#pragma once

#include "dvpp/adpf.hpp"
#include "dvpp/alloc.hpp"
#include "dvpp/fleet.hpp"
#include "dvpp/synth.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dvpp {

struct ChannelCheck {
    ChannelKind channel = ChannelKind::fp;
    double max_residual = 0.0;  // over the grid and every sampled parameter
};

struct DeviceCheck {
    std::string id;
    double gamma = 0.0;
    double worst_lmi = 0.0;     // largest eigenvalue of any certificate block
    int samples = 0;
    int hurwitz = 0;
    double worst_ratio = 0.0;   // largest frozen norm over gamma
    bool ok = false;
};

struct VerifyReport {
    std::vector<ChannelCheck> channels;
    std::vector<DeviceCheck> devices;
    bool ok = false;
};

// Fleet parameters reachable by allocation: capacities drawn uniformly in
// their intervals, shares from the allocation rule.
inline VectorXd sample_allocation(const FleetDesign& d, std::mt19937_64& rng) {
    const FleetSpec& f = d.spec;
    std::vector<double> p = capacity_point(f, 0);
    for (std::size_t i = 0; i < f.devices.size(); ++i)
        if (const auto& c = f.devices[i].p_capacity) p[i] = std::uniform_real_distribution<double>(c->lo, c->hi)(rng);
    VectorXd th = d.nominal_theta();
    for (const auto& plan : d.plans) {
        if (plan.lpf_devices.empty()) continue;
        VectorXd y = channel_capacity(f, plan, p);
        if (y.sum() <= 0.0) y.setOnes();
        const VectorXd a = allocate(y, plan.fixed_dc);
        for (std::size_t k = 0; k < plan.lpf_slots.size(); ++k) th(plan.lpf_slots[k]) = a(static_cast<int>(k));
    }
    return th;
}

inline VectorXd sample_box(const ThetaBox& box, std::mt19937_64& rng) {
    VectorXd th(box.dim());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int j = 0; j < box.dim(); ++j) th(j) = box.lo(j) + u(rng) * (box.hi(j) - box.lo(j));
    return th;
}

// Participation residuals at the nominal and sampled parameters, certificate
// margins, and frozen-parameter checks of every controller.
inline VerifyReport verify_design(const FleetDesign& d, int n_samples, std::uint64_t seed, const FreqGrid& grid,
                                  double lmi_tol = -5e-9, double gain_rel_tol = 1e-4) {
    VerifyReport r;
    std::mt19937_64 rng(seed);
    std::vector<VectorXd> thetas{d.nominal_theta()};
    for (int k = 0; k < n_samples; ++k) thetas.push_back(sample_allocation(d, rng));
    for (const auto& plan : d.plans) {
        ChannelCheck c{plan.channel, 0.0};
        for (const auto& th : thetas)
            c.max_residual = std::max(c.max_residual, participation_residual(plan.adpf, th, d.tau_c, grid));
        r.channels.push_back(c);
    }
    r.ok = std::all_of(r.channels.begin(), r.channels.end(), [](const ChannelCheck& c) { return c.max_residual <= 1e-9; });
    for (const auto& dd : d.devices) {
        if (!dd.controllable()) continue;
        DeviceCheck c;
        c.id = d.spec.devices[static_cast<std::size_t>(dd.device)].id;
        c.gamma = dd.ctrl.gamma;
        c.worst_lmi = -std::numeric_limits<double>::infinity();
        for (const auto& l : dd.ctrl.lmis) c.worst_lmi = std::max(c.worst_lmi, l.max_eig);
        std::vector<VectorXd> smp;
        for (int k = 0; k < n_samples; ++k) smp.push_back(sample_box(dd.ctrl.box, rng));
        const auto val = brl_validate(dd.aug, dd.ctrl, smp, gain_rel_tol);
        c.samples = static_cast<int>(val.size());
        for (const auto& s : val) {
            c.hurwitz += s.hurwitz ? 1 : 0;
            if (dd.ctrl.gamma > 0.0) c.worst_ratio = std::max(c.worst_ratio, s.hinf / dd.ctrl.gamma);
        }
        c.ok = !dd.ctrl.lmis.empty() && c.worst_lmi <= lmi_tol && c.hurwitz == c.samples &&
               std::all_of(val.begin(), val.end(), [](const ValidationSample& s) { return s.ok; });
        r.ok = r.ok && c.ok;
        r.devices.push_back(c);
    }
    return r;
}

}  // namespace dvpp
