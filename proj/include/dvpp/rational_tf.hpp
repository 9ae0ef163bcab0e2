#pragma once

#include "dvpp/errors.hpp"
#include "dvpp/polynomial.hpp"

#include <complex>
#include <vector>

namespace dvpp {

// SISO rational transfer function num(s)/den(s). The denominator is kept with a
// unit leading coefficient.
class RationalTF {
public:
    RationalTF() : num_(Polynomial::constant(0.0)), den_(Polynomial::constant(1.0)) {}
    RationalTF(Polynomial num, Polynomial den) : num_(std::move(num)), den_(std::move(den)) { normalize(); }
    RationalTF(std::initializer_list<double> num, std::initializer_list<double> den)
        : RationalTF(Polynomial(num), Polynomial(den)) {}

    static RationalTF gain(double k) { return RationalTF(Polynomial::constant(k), Polynomial::constant(1.0)); }
    // k / (tau s + 1)
    static RationalTF first_order(double k, double tau) { return RationalTF({k}, {tau, 1.0}); }

    const Polynomial& num() const { return num_; }
    const Polynomial& den() const { return den_; }

    bool is_zero() const { return num_.is_zero(); }
    bool is_proper() const { return num_.is_zero() || num_.degree() <= den_.degree(); }
    bool is_strictly_proper() const { return num_.is_zero() || num_.degree() < den_.degree(); }
    int order() const { return den_.degree(); }

    std::complex<double> operator()(std::complex<double> s) const { return num_(s) / den_(s); }

    double dc_gain() const {
        if (den_.at_zero() == 0.0) throw Error("transfer function has a pole at the origin");
        return num_.at_zero() / den_.at_zero();
    }

    std::vector<std::complex<double>> poles() const { return den_.roots(); }
    std::vector<std::complex<double>> zeros() const { return num_.roots(); }

    friend RationalTF operator+(const RationalTF& a, const RationalTF& b) {
        if (a.den_ == b.den_) return RationalTF(a.num_ + b.num_, a.den_);
        return RationalTF(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
    }
    friend RationalTF operator-(const RationalTF& a, const RationalTF& b) {
        if (a.den_ == b.den_) return RationalTF(a.num_ - b.num_, a.den_);
        return RationalTF(a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_);
    }
    friend RationalTF operator*(const RationalTF& a, const RationalTF& b) {
        return RationalTF(a.num_ * b.num_, a.den_ * b.den_);
    }
    friend RationalTF operator*(double k, const RationalTF& a) { return RationalTF(a.num_.scaled(k), a.den_); }
    RationalTF operator-() const { return RationalTF(num_.scaled(-1.0), den_); }

    RationalTF inv() const {
        if (num_.is_zero()) throw Error("singular transfer function");
        return RationalTF(den_, num_);
    }

    RationalTF pow(int k) const {
        RationalTF r = gain(1.0);
        for (int i = 0; i < k; ++i) r = r * *this;
        return r;
    }

    // Cancels numerator/denominator roots that coincide within tol (relative to
    // the root magnitude, floored at one).
    RationalTF minimal(double tol = 1e-9) const {
        if (num_.is_zero()) return RationalTF();
        auto z = num_.roots();
        auto p = den_.roots();
        std::vector<bool> used(p.size(), false);
        std::vector<std::complex<double>> zk, pk;
        for (const auto& zi : z) {
            int best = -1;
            double bd = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                if (used[j]) continue;
                const double d = std::abs(zi - p[j]);
                if (d <= tol * std::max(1.0, std::abs(p[j])) && (best < 0 || d < bd)) {
                    best = static_cast<int>(j);
                    bd = d;
                }
            }
            if (best >= 0)
                used[static_cast<std::size_t>(best)] = true;
            else
                zk.push_back(zi);
        }
        if (zk.size() == z.size()) return *this;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (!used[j]) pk.push_back(p[j]);
        return RationalTF(Polynomial::from_roots(zk, num_.leading()), Polynomial::from_roots(pk, 1.0));
    }

private:
    void normalize() {
        if (den_.is_zero()) throw Error("singular transfer function");
        if (num_.is_zero()) {
            den_ = Polynomial::constant(1.0);
            return;
        }
        const double l = den_.leading();
        if (l != 1.0) {
            num_ = num_.scaled(1.0 / l);
            den_ = den_.scaled(1.0 / l);
        }
    }

    Polynomial num_, den_;
};

}  // namespace dvpp
