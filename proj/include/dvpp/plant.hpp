#pragma once

#include "dvpp/errors.hpp"
#include "dvpp/rational_tf.hpp"
#include "dvpp/state_space.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dvpp {

struct HydroParams {
    double R_g = 0.03;
    double R_t = 0.38;
    double tau_g = 0.2;
    double tau_r = 5.0;
    double tau_w = 1.0;
};

// Frequency-to-power response of a hydro unit: governor lag, transient droop
// compensation and the non-minimum-phase penstock.
inline RationalTF hydro_model(const HydroParams& p) {
    if (p.R_g <= 0.0 || p.tau_g < 0.0 || p.tau_r < 0.0 || p.tau_w < 0.0)
        throw ConfigError("hydro", "parameters must be positive");
    const RationalTF gov = RationalTF::first_order(-1.0 / p.R_g, p.tau_g);
    const RationalTF comp({p.tau_r, 1.0}, {p.R_t / p.R_g * p.tau_r, 1.0});
    const RationalTF pen({-p.tau_w, 1.0}, {0.5 * p.tau_w, 1.0});
    return gov * comp * pen;
}

struct ConverterParams {
    double L_f = 0.0942;
    double R_f = 0.01;
    double k_p = 0.73;
    double k_i = 1.19;
    double omega_b = 2.0 * std::numbers::pi * 50.0;
    double v_star = 1.0;
};

enum class Axes { d_only, dq };

// Current-controlled converter with a PI inner loop. States per axis are the
// current deviation and the integrator state; the input is the current
// reference and the output the injected power (active on d, reactive on q).
inline StateSpace converter_plant(const ConverterParams& p, Axes axes) {
    if (p.L_f <= 0.0 || p.omega_b <= 0.0) throw ConfigError("converter", "parameters must be positive");
    const double g = p.k_p * p.omega_b / p.L_f;
    MatrixXd A(2, 2), B(2, 1), C(1, 2);
    A << -g, p.k_i * p.omega_b / p.L_f, -1.0, 0.0;
    B << g, 1.0;
    C << p.v_star, 0.0;
    StateSpace ss;
    if (axes == Axes::d_only) {
        ss.A = A;
        ss.B = B;
        ss.C = C;
        ss.D = MatrixXd::Zero(1, 1);
        return ss;
    }
    ss.A = MatrixXd::Zero(4, 4);
    ss.B = MatrixXd::Zero(4, 2);
    ss.C = MatrixXd::Zero(2, 4);
    ss.A.topLeftCorner(2, 2) = A;
    ss.A.bottomRightCorner(2, 2) = A;
    ss.B.block(0, 0, 2, 1) = B;
    ss.B.block(2, 1, 2, 1) = B;
    ss.C.block(0, 0, 1, 2) = C;
    ss.C.block(1, 2, 1, 2) = -C;
    ss.D = MatrixXd::Zero(2, 2);
    return ss;
}

enum class BehaviorKind { droop, inertia_droop };

struct DesiredBehavior {
    BehaviorKind kind = BehaviorKind::droop;
    double D = 0.0;
    double H = 0.0;
    double tau = 0.2;

    RationalTF tf() const {
        if (tau < 0.0) throw ConfigError("desired", "time constant must be non-negative");
        if (kind == BehaviorKind::droop) return RationalTF::first_order(-D, tau);
        return RationalTF({-H, -D}, {tau, 1.0});
    }
};

// Remaining reactive capability (device pu) at active output p (device pu).
inline double q_capacity(double p) {
    if (p < 0.0 || p > 1.0) throw Error("active power outside rated range");
    return std::sqrt(1.0 - p * p);
}

inline StateSpace scale_output(StateSpace ss, double k) {
    ss.C *= k;
    ss.D *= k;
    return ss;
}

}  // namespace dvpp
