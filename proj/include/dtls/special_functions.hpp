// special_functions.hpp: integer-order Bessel functions J_n(x) and the
// dressed tunneling elements delta_n = J_n(amp/omega) * delta.

#pragma once

#include "dtls/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

namespace dtls {

inline constexpr int bessel_order_ceiling = 500;

namespace detail {

inline void check_bessel_args(int n, double x) {
    if (!std::isfinite(x)) throw domain_error("bessel_j: argument must be finite");
    if (std::abs(n) > bessel_order_ceiling) {
        throw domain_error("bessel_j: |order| " + std::to_string(n) + " exceeds ceiling " +
                           std::to_string(bessel_order_ceiling));
    }
}

// Ascending series, used for |x| <= 2 and n >= 0.
inline double bessel_series(int n, double x) {
    if (x == 0.0) return n == 0 ? 1.0 : 0.0;
    const double half = 0.5 * x;
    const double q = -half * half;
    // Leading term (x/2)^n / n! in log space so large n underflows cleanly.
    double term = std::exp(n * std::log(std::abs(half)) - std::lgamma(n + 1.0));
    if (half < 0.0 && (n & 1)) term = -term;
    double sum = term;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k + n));
        sum += term;
        if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

// Miller downward recurrence with the J_0 + 2 sum J_2k = 1 normalization.
// Fills out[0..nmax] for x > 0.
inline void bessel_miller(int nmax, double x, std::vector<double>& out) {
    // Anchored at max(nmax, x): below the turning point the recurrence needs
    // the full 10 + 1.5 x margin above x itself to reach 1e-15 accuracy.
    const int start = std::max(nmax, static_cast<int>(std::ceil(x))) + static_cast<int>(std::ceil(10.0 + 1.5 * x)) + 1;
    out.assign(static_cast<std::size_t>(nmax) + 1, 0.0);
    double jp1 = 0.0;
    double j = 1e-300;
    double norm = 0.0;
    for (int k = start; k >= 0; --k) {
        if (k <= nmax) out[static_cast<std::size_t>(k)] = j;
        if (k == 0) {
            norm += j;
        } else if ((k & 1) == 0) {
            norm += 2.0 * j;
        }
        if (k == 0) break;
        const double jm1 = (2.0 * k / x) * j - jp1;
        jp1 = j;
        j = jm1;
        if (std::abs(j) > 1e250) {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            for (auto& v : out) v *= 1e-250;
        }
    }
    for (auto& v : out) v /= norm;
}

}  // namespace detail

// J_n(x) for integer n with |n| <= 500.
inline double bessel_j(int n, double x) {
    detail::check_bessel_args(n, x);
    double sign = 1.0;
    if (n < 0) {
        n = -n;
        if (n & 1) sign = -sign;
    }
    if (x < 0.0) {
        x = -x;
        if (n & 1) sign = -sign;
    }
    if (x <= 2.0) return sign * detail::bessel_series(n, x);
    std::vector<double> vals;
    detail::bessel_miller(n, x, vals);
    return sign * vals[static_cast<std::size_t>(n)];
}

// Table of J_k(x) for k = -kmax..kmax, from one recurrence.
class BesselTable {
public:
    BesselTable() = default;
    BesselTable(int kmax, double x) : kmax_(kmax), x_(x) {
        detail::check_bessel_args(kmax, x);
        const double ax = std::abs(x);
        std::vector<double> pos;
        if (ax <= 2.0) {
            pos.resize(static_cast<std::size_t>(kmax) + 1);
            for (int k = 0; k <= kmax; ++k) pos[static_cast<std::size_t>(k)] = detail::bessel_series(k, ax);
        } else {
            detail::bessel_miller(kmax, ax, pos);
        }
        values_.assign(2 * static_cast<std::size_t>(kmax) + 1, 0.0);
        for (int k = 0; k <= kmax; ++k) {
            double v = pos[static_cast<std::size_t>(k)];
            if (x < 0.0 && (k & 1)) v = -v;
            values_[static_cast<std::size_t>(kmax + k)] = v;
            values_[static_cast<std::size_t>(kmax - k)] = (k & 1) ? -v : v;
        }
    }

    // Orders beyond the table are evaluated directly.
    double operator()(int k) const {
        if (std::abs(k) <= kmax_) return values_[static_cast<std::size_t>(k + kmax_)];
        return bessel_j(k, x_);
    }

    int kmax() const noexcept { return kmax_; }
    double argument() const noexcept { return x_; }

private:
    int kmax_{0};
    double x_{0.0};
    std::vector<double> values_{1.0};
};

// Dressed tunneling element delta_n = J_n(amp/omega) * delta.
inline double dressed_delta(int n, const SystemParams& p) {
    p.validate();
    return bessel_j(n, p.drive_ratio()) * p.delta;
}

// Cached dressed elements for one parameter point; the analytic tiers query
// the same handful of orders thousands of times.
class DressedDeltas {
public:
    DressedDeltas(const SystemParams& p, int kmax)
        : delta_(p.delta), table_(std::min(kmax, bessel_order_ceiling), p.drive_ratio()) {
        p.validate();
    }

    double operator()(int n) const { return delta_ * table_(n); }
    int kmax() const noexcept { return table_.kmax(); }

private:
    double delta_;
    BesselTable table_;
};

}  // namespace dtls
