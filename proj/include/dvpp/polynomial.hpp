#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <vector>

namespace dvpp {

// Real polynomial with coefficients in descending powers of s.
class Polynomial {
public:
    Polynomial() : c_{0.0} {}
    Polynomial(std::initializer_list<double> c) : c_(c) { trim(); }
    explicit Polynomial(std::vector<double> c) : c_(std::move(c)) { trim(); }

    static Polynomial constant(double v) { return Polynomial(std::vector<double>{v}); }

    // Monic-scaled product gain * prod (s - r_k); conjugate pairs are combined so
    // the result stays real.
    static Polynomial from_roots(const std::vector<std::complex<double>>& roots, double gain) {
        std::vector<std::complex<double>> p{1.0};
        for (const auto& r : roots) {
            std::vector<std::complex<double>> q(p.size() + 1, 0.0);
            for (std::size_t i = 0; i < p.size(); ++i) {
                q[i] += p[i];
                q[i + 1] -= p[i] * r;
            }
            p = std::move(q);
        }
        std::vector<double> c(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) c[i] = gain * p[i].real();
        return Polynomial(std::move(c));
    }

    const std::vector<double>& coeffs() const { return c_; }
    int degree() const { return static_cast<int>(c_.size()) - 1; }
    bool is_zero() const { return c_.size() == 1 && c_[0] == 0.0; }
    double leading() const { return c_.front(); }
    double at_zero() const { return c_.back(); }

    std::complex<double> operator()(std::complex<double> s) const {
        std::complex<double> acc = 0.0;
        for (double v : c_) acc = acc * s + v;
        return acc;
    }

    Polynomial scaled(double k) const {
        std::vector<double> c = c_;
        for (double& v : c) v *= k;
        return Polynomial(std::move(c));
    }

    // Coefficient of s^k (zero beyond the degree).
    double coeff_of_power(int k) const {
        const int d = degree();
        return (k > d || k < 0) ? 0.0 : c_[static_cast<std::size_t>(d - k)];
    }

    std::vector<std::complex<double>> roots() const {
        const int n = degree();
        if (n < 1) return {};
        if (n == 1) return {std::complex<double>(-c_[1] / c_[0], 0.0)};
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
        for (int j = 0; j < n; ++j) comp(0, j) = -c_[static_cast<std::size_t>(j + 1)] / c_[0];
        for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
        Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
        std::vector<std::complex<double>> r(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        return r;
    }

    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        std::vector<double> c(a.c_.size() + b.c_.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.c_.size(); ++i)
            for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
        return Polynomial(std::move(c));
    }

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b) { return combine(a, b, 1.0); }
    friend Polynomial operator-(const Polynomial& a, const Polynomial& b) { return combine(a, b, -1.0); }

    friend bool operator==(const Polynomial& a, const Polynomial& b) { return a.c_ == b.c_; }

private:
    // a + sign * b. Leading terms that cancel down to rounding noise are dropped,
    // otherwise a difference of two equal-degree polynomials would keep a spurious
    // top coefficient.
    static Polynomial combine(const Polynomial& a, const Polynomial& b, double sign) {
        const std::size_t n = std::max(a.c_.size(), b.c_.size());
        std::vector<double> c(n, 0.0), scale(n, 0.0);
        for (std::size_t i = 0; i < a.c_.size(); ++i) {
            c[n - a.c_.size() + i] += a.c_[i];
            scale[n - a.c_.size() + i] = std::max(scale[n - a.c_.size() + i], std::abs(a.c_[i]));
        }
        for (std::size_t i = 0; i < b.c_.size(); ++i) {
            c[n - b.c_.size() + i] += sign * b.c_[i];
            scale[n - b.c_.size() + i] = std::max(scale[n - b.c_.size() + i], std::abs(b.c_[i]));
        }
        std::size_t k = 0;
        while (k + 1 < n && std::abs(c[k]) <= 1e-13 * scale[k]) ++k;
        c.erase(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k));
        if (c.size() == 1 && std::abs(c[0]) <= 1e-13 * scale.back()) c[0] = 0.0;
        return Polynomial(std::move(c));
    }

    void trim() {
        if (c_.empty()) c_.push_back(0.0);
        std::size_t k = 0;
        while (k + 1 < c_.size() && c_[k] == 0.0) ++k;
        c_.erase(c_.begin(), c_.begin() + static_cast<std::ptrdiff_t>(k));
    }

    std::vector<double> c_;
};

}  // namespace dvpp
