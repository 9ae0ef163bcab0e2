#pragma once

#include "dvpp/errors.hpp"
#include "dvpp/state_space.hpp"

#include <string>
#include <vector>

namespace dvpp {

// Axis-aligned parameter box. `index` maps each local coordinate to its slot in
// the fleet-wide parameter vector.
struct ThetaBox {
    std::vector<std::string> names;
    std::vector<int> index;
    VectorXd lo, hi;

    int dim() const { return static_cast<int>(lo.size()); }

    void validate() const {
        if (lo.size() != hi.size() || static_cast<int>(names.size()) != dim() ||
            static_cast<int>(index.size()) != dim())
            throw Error("inconsistent parameter box");
        for (int j = 0; j < dim(); ++j)
            if (!(lo(j) >= 0.0 && hi(j) <= 1.0 && lo(j) <= hi(j)))
                throw Error("parameter box must satisfy 0 <= lo <= hi <= 1");
    }

    VectorXd center() const { return 0.5 * (lo + hi); }

    bool contains(const VectorXd& th, double tol = 0.0) const {
        for (int j = 0; j < dim(); ++j)
            if (th(j) < lo(j) - tol || th(j) > hi(j) + tol) return false;
        return true;
    }

    // Picks this box's coordinates out of a fleet-wide parameter vector.
    VectorXd local(const VectorXd& global) const {
        VectorXd th(dim());
        for (int j = 0; j < dim(); ++j) th(j) = global(index[static_cast<std::size_t>(j)]);
        return th;
    }
};

// Matrices of a linear system with plant input u, exogenous input w, and
// output y = C x + D u + F w.
struct LpvMatrices {
    MatrixXd A, B, E, C, D, F;

    LpvMatrices& operator+=(const LpvMatrices& o) {
        A += o.A;
        B += o.B;
        E += o.E;
        C += o.C;
        D += o.D;
        F += o.F;
        return *this;
    }

    LpvMatrices scaled(double k) const { return {k * A, k * B, k * E, k * C, k * D, k * F}; }

    LpvMatrices zero_like() const { return scaled(0.0); }

    static LpvMatrices zeros(int n, int m, int nw, int p) {
        return {MatrixXd::Zero(n, n), MatrixXd::Zero(n, m), MatrixXd::Zero(n, nw),
                MatrixXd::Zero(p, n), MatrixXd::Zero(p, m), MatrixXd::Zero(p, nw)};
    }
};

// System whose matrices depend affinely on the local box coordinates:
// M(theta) = base + sum_j theta_j inc[j].
struct AffineLpv {
    LpvMatrices base;
    std::vector<LpvMatrices> inc;
    ThetaBox box;

    int states() const { return static_cast<int>(base.A.rows()); }
    int inputs() const { return static_cast<int>(base.B.cols()); }
    int exo_inputs() const { return static_cast<int>(base.E.cols()); }
    int outputs() const { return static_cast<int>(base.C.rows()); }

    LpvMatrices at(const VectorXd& theta) const {
        if (theta.size() != static_cast<int>(inc.size())) throw Error("parameter dimension mismatch");
        LpvMatrices m = base;
        for (std::size_t j = 0; j < inc.size(); ++j) m += inc[j].scaled(theta(static_cast<int>(j)));
        return m;
    }
};

}  // namespace dvpp
