// vanvleck.hpp: closed-form analytics around an m-photon resonance:
// RWA and second-order Van Vleck frequencies, mixing angles, the shifted
// resonance condition, transformed eigenstates and the closed-system
// survival probability.
//
// Sign conventions follow floquet.hpp: the resonant pair is (up,n)/(down,n+m),
// Phi_+ carries an overall minus sign relative to the textbook form so that
// X_{-+}^{(m)} = +sin(Theta)/2 within the RWA.

#pragma once

#include "dtls/core.hpp"
#include "dtls/floquet.hpp"
#include "dtls/special_functions.hpp"

#include <cmath>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dtls {

enum class AngleOrder { rwa, vv2 };
enum class StateOrder { order1, order2 };

// Parameters of one resonance plus the cached dressed elements.
class ResonanceContext {
public:
    ResonanceContext(const SystemParams& p, int m, int l_max = 40, double delta_den = -1.0)
        : p_(p), m_(m), l_max_(l_max), delta_den_(delta_den < 0.0 ? 1e-6 * p.delta : delta_den) {
        p_.validate();
        if (l_max_ < 1) throw validation_error("ResonanceContext: l_max must be >= 1");
        if (!(delta_den_ > 0.0)) throw validation_error("ResonanceContext: delta_den must be > 0");
        kmax_ = std::min(3 * l_max_ + 3 * std::abs(m_) + 16, bessel_order_ceiling);
        if (std::abs(m_) + l_max_ > bessel_order_ceiling)
            throw validation_error("ResonanceContext: |m| + l_max exceeds the Bessel order ceiling");
        deltas_ = std::make_shared<DressedDeltas>(p_, kmax_);
    }

    const SystemParams& params() const noexcept { return p_; }
    int m() const noexcept { return m_; }
    int l_max() const noexcept { return l_max_; }
    double delta_den() const noexcept { return delta_den_; }

    // Delta_n = J_n(A/omega) * delta.
    double dd(int n) const { return (*deltas_)(n); }

    // Guarded denominator: throws when a retained term is near-singular.
    double den(double d, const char* where) const {
        if (std::abs(d) <= delta_den_) {
            throw numerical_error(std::string(where) + ": near-singular denominator " + std::to_string(d) +
                                  " (guard " + std::to_string(delta_den_) + ")");
        }
        return d;
    }

    // eps + l omega
    double eps_l(int l) const noexcept { return p_.epsilon + l * p_.omega; }

    ResonanceContext with_epsilon(double eps) const {
        SystemParams q = p_;
        q.epsilon = eps;
        return ResonanceContext(q, m_, l_max_, delta_den_);
    }

    ResonanceContext with_l_max(int l_max) const { return ResonanceContext(p_, m_, l_max, delta_den_); }

private:
    SystemParams p_;
    int m_;
    int l_max_;
    double delta_den_;
    int kmax_{0};
    std::shared_ptr<const DressedDeltas> deltas_;
};

// m = round(eps/omega): the resonance the analytic tiers expand around.
inline int nearest_resonance(const SystemParams& p) {
    return static_cast<int>(std::lround(p.epsilon / p.omega));
}

// S = sum_{l != -m} Delta_l^2 / (eps + l omega).
inline double second_order_sum(const ResonanceContext& c) {
    double s = 0.0;
    for (int l = -c.l_max(); l <= c.l_max(); ++l) {
        if (l == -c.m()) continue;
        const double d = c.dd(l);
        s += d * d / c.den(c.eps_l(l), "second_order_sum");
    }
    return s;
}

inline double rwa_detuning(const ResonanceContext& c) {
    return -c.params().epsilon + c.m() * c.params().omega;
}

inline double vv2_detuning(const ResonanceContext& c, double shift_sum) {
    return rwa_detuning(c) - 0.5 * shift_sum;
}

inline double rwa_frequency(const ResonanceContext& c) {
    return std::hypot(rwa_detuning(c), c.dd(-c.m()));
}

// Same square-root form with an explicit second-order sum (0 reproduces RWA).
inline double vv2_frequency(const ResonanceContext& c, double shift_sum) {
    return std::hypot(vv2_detuning(c, shift_sum), c.dd(-c.m()));
}

inline double vv2_frequency(const ResonanceContext& c) { return vv2_frequency(c, second_order_sum(c)); }

// Theta in (0, pi] from tan Theta = |Delta_{-m}| / detuning. When both the
// coupling and the detuning vanish (CDT point) Theta is pi/2.
inline constexpr double cdt_tolerance = 1e-9;

inline double mixing_angle_from(double detuning, double coupling, double delta) {
    const double ac = std::abs(coupling);
    if (ac < cdt_tolerance * delta && std::abs(detuning) < cdt_tolerance * delta) return 0.5 * pi;
    return std::atan2(ac, detuning);
}

inline double mixing_angle(const ResonanceContext& c, AngleOrder order) {
    const double det = order == AngleOrder::rwa ? rwa_detuning(c) : vv2_detuning(c, second_order_sum(c));
    return mixing_angle_from(det, c.dd(-c.m()), c.params().delta);
}

inline bool is_cdt_point(const ResonanceContext& c) {
    return std::abs(c.dd(-c.m())) < cdt_tolerance * c.params().delta;
}

// Root of eps = m omega - S(eps)/2 inside (m omega - omega/2, m omega + omega/2).
// p.epsilon is ignored.
inline double resonance_bias(int m, const SystemParams& p, int l_max = 40, double tol = -1.0) {
    p.validate();
    if (tol < 0.0) tol = 1e-12 * p.delta;
    const double lo0 = m * p.omega - 0.5 * p.omega;
    const double hi0 = m * p.omega + 0.5 * p.omega;
    auto f = [&](double e) {
        SystemParams q = p;
        q.epsilon = e;
        const ResonanceContext c(q, m, l_max);
        return e - m * p.omega + 0.5 * second_order_sum(c);
    };
    // The bracket ends sit half a photon from the nearest poles; scan for
    // sign changes so multiple roots are reported rather than picked silently.
    constexpr int scan = 64;
    const double h = (hi0 - lo0) / scan;
    std::vector<std::pair<double, double>> brackets;
    double xa = lo0 + 1e-9 * p.omega;
    double fa = f(xa);
    if (fa == 0.0) brackets.emplace_back(xa, xa);
    for (int i = 1; i <= scan; ++i) {
        const double xb = i == scan ? hi0 - 1e-9 * p.omega : lo0 + i * h;
        const double fb = f(xb);
        // a root sitting exactly on a node is recorded once, as that node
        if (fb == 0.0) brackets.emplace_back(xb, xb);
        else if (fa != 0.0 && (fa < 0.0) != (fb < 0.0)) brackets.emplace_back(xa, xb);
        xa = xb;
        fa = fb;
    }
    if (brackets.empty()) {
        throw numerical_error("resonance_bias: no root in (" + std::to_string(lo0) + ", " + std::to_string(hi0) +
                              ")");
    }
    if (brackets.size() > 1) {
        std::string msg = "resonance_bias: " + std::to_string(brackets.size()) + " roots in bracket; sub-brackets";
        for (const auto& [a, b] : brackets) msg += " [" + std::to_string(a) + ", " + std::to_string(b) + "]";
        throw numerical_error(msg);
    }
    double a = brackets[0].first, b = brackets[0].second;
    if (a == b) return a;
    double fa2 = f(a), fb2 = f(b);
    // Bisection to a tight bracket, then secant polish kept inside it.
    for (int it = 0; it < 200 && b - a > 1e-6 * p.omega; ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = f(mid);
        if ((fm < 0.0) == (fa2 < 0.0)) {
            a = mid;
            fa2 = fm;
        } else {
            b = mid;
            fb2 = fm;
        }
    }
    for (int it = 0; it < 100; ++it) {
        double x = b - fb2 * (b - a) / (fb2 - fa2);
        if (!(x > a && x < b)) x = 0.5 * (a + b);
        const double fx = f(x);
        if (fx == 0.0) return x;
        if ((fx < 0.0) == (fa2 < 0.0)) {
            a = x;
            fa2 = fx;
        } else {
            b = x;
            fb2 = fx;
        }
        if (std::abs(fx) < tol || b - a < tol) return std::abs(fa2) < std::abs(fb2) ? a : b;
    }
    return 0.5 * (a + b);
}

struct VanVleckSolution {
    int m{0};
    double omega_rwa{0.0};
    double omega_vv2{0.0};
    double theta_rwa{0.0};
    double theta_vv2{0.0};
    double sign_dm{1.0};
    double shift_sum{0.0};
    bool cdt_flag{false};
    double series_rel_change{0.0};  // |S(2 l_max) - S(l_max)| / max(|S|, tiny)
    ModePair states_order1;
    ModePair states_order2;
};

namespace detail {

inline int vv_window(const ResonanceContext& c) { return 2 * c.l_max() + 2 * std::abs(c.m()) + 2; }

// Builds |Phi_{-,0}>, |Phi_{+,0}> to first or second order in delta.
inline std::pair<CompositeState, CompositeState> vv_states(const ResonanceContext& c, StateOrder order,
                                                           double theta) {
    const int m = c.m();
    const int L = c.l_max();
    const double w = c.params().omega;
    const double eps = c.params().epsilon;
    const double sg = sign_or_plus(c.dd(-m));
    const double sn = std::sin(0.5 * theta);
    const double cs = std::cos(0.5 * theta);
    CompositeState mi(vv_window(c));
    CompositeState pl(vv_window(c));
    const Spin up = Spin::up, dn = Spin::down;

    // Effective (RWA) doublet.
    mi.add(up, 0, -sn);
    mi.add(dn, m, -sg * cs);
    pl.add(up, -m, cs);
    pl.add(dn, 0, -sg * sn);

    // First order.
    for (int j = -L; j <= L; ++j) {
        if (j == -m) continue;
        const double a = 0.5 * c.dd(j) / c.den(c.eps_l(j), "vv_eigenstates");
        mi.add(up, j + m, a * sg * cs);
        mi.add(dn, -j, -a * sn);
        pl.add(up, j, a * sg * sn);
        pl.add(dn, -m - j, a * cs);
    }

    if (order == StateOrder::order2) {
        for (int j = -L; j <= L; ++j) {
            if (j == 0) continue;
            const double jw = j * w;
            double wj = c.dd(-m) / (4.0 * jw) *
                        (c.dd(j - m) / c.den(eps + (j - m) * w, "vv_eigenstates") +
                         c.dd(-j - m) / c.den(eps - (j + m) * w, "vv_eigenstates"));
            for (int q = -L; q <= L; ++q) {
                if (q == -j - m || q == -m) continue;
                wj += c.dd(j + q) * c.dd(q) / (8.0 * jw) *
                      (1.0 / c.den(c.eps_l(j + q), "vv_eigenstates") + 1.0 / c.den(c.eps_l(q), "vv_eigenstates"));
            }
            mi.add(up, j, sn * wj);
            mi.add(dn, -j + m, sg * cs * wj);
            pl.add(up, j - m, -cs * wj);
            pl.add(dn, -j, sg * sn * wj);
        }
        for (int k = -L; k <= L; ++k) {
            if (k == -m) continue;
            const double ak = c.dd(k) / c.den(c.eps_l(k), "vv_eigenstates");
            for (int j = -L; j <= L; ++j) {
                if (j == -m) continue;
                const double v = ak * c.dd(j) / c.eps_l(j) / 8.0;
                mi.add(up, k - j, v * sn);
                mi.add(dn, k + m - j, v * sg * cs);
                pl.add(up, k - j - m, -v * cs);
                pl.add(dn, j - k, v * sg * sn);
            }
        }
    }
    pl *= -1.0;  // phase convention, see header comment
    mi.normalize();
    pl.normalize();
    return {mi.trimmed(1e-300), pl.trimmed(1e-300)};
}

inline ModePair make_modes(const ResonanceContext& c, std::pair<CompositeState, CompositeState> st, double omega,
                           SolutionTier tier) {
    const double nu = c.m() * c.params().omega + omega;
    return ModePair{std::move(st.first), std::move(st.second), -0.5 * nu, 0.5 * nu, c.params(), tier};
}

}  // namespace detail

// RWA doublet |Phi_{-,0}>, |Phi_{+,0}> (no perturbative dressing).
inline ModePair rwa_modes(const ResonanceContext& c) {
    const double th = mixing_angle(c, AngleOrder::rwa);
    const double sg = sign_or_plus(c.dd(-c.m()));
    const int m = c.m();
    CompositeState mi(std::abs(m) + 1), pl(std::abs(m) + 1);
    mi.at(Spin::up, 0) = -std::sin(0.5 * th);
    mi.at(Spin::down, m) = -sg * std::cos(0.5 * th);
    pl.at(Spin::up, -m) = -std::cos(0.5 * th);
    pl.at(Spin::down, 0) = sg * std::sin(0.5 * th);
    return detail::make_modes(c, {mi, pl}, rwa_frequency(c), SolutionTier::rwa);
}

// First order uses the RWA angle and frequency (the first-order effective
// Hamiltonian is the RWA block); second order uses Theta_m and Omega^(2).
inline ModePair vv_eigenstates(const ResonanceContext& c, StateOrder order) {
    if (order == StateOrder::order1) {
        return detail::make_modes(c, detail::vv_states(c, order, mixing_angle(c, AngleOrder::rwa)), rwa_frequency(c),
                                  SolutionTier::vv1);
    }
    return detail::make_modes(c, detail::vv_states(c, order, mixing_angle(c, AngleOrder::vv2)), vv2_frequency(c),
                              SolutionTier::vv2);
}

inline VanVleckSolution solve_van_vleck(const ResonanceContext& c) {
    VanVleckSolution s;
    s.m = c.m();
    s.shift_sum = second_order_sum(c);
    s.omega_rwa = rwa_frequency(c);
    s.omega_vv2 = vv2_frequency(c, s.shift_sum);
    s.theta_rwa = mixing_angle(c, AngleOrder::rwa);
    s.theta_vv2 = mixing_angle_from(vv2_detuning(c, s.shift_sum), c.dd(-c.m()), c.params().delta);
    s.sign_dm = sign_or_plus(c.dd(-c.m()));
    s.cdt_flag = is_cdt_point(c);
    if (2 * c.l_max() + std::abs(c.m()) <= bessel_order_ceiling) {
        const double s2 = second_order_sum(c.with_l_max(2 * c.l_max()));
        s.series_rel_change = std::abs(s2 - s.shift_sum) / std::max(std::abs(s2), 1e-300);
    }
    s.states_order1 = vv_eigenstates(c, StateOrder::order1);
    s.states_order2 = vv_eigenstates(c, StateOrder::order2);
    return s;
}

// Analytic doublet quasienergies eps_{-,0} and its partner eps_{+,m}
// (both unfolded), for the given order.
inline std::pair<double, double> analytic_quasienergies(const ResonanceContext& c, AngleOrder order) {
    const double om = order == AngleOrder::rwa ? rwa_frequency(c) : vv2_frequency(c);
    const double centre = -0.5 * c.m() * c.params().omega;
    return {centre - 0.5 * om, centre + 0.5 * om};
}

struct HarmonicConstants {
    double a0{0.0};
    double b0{0.0};
    double c0{0.0};
    std::optional<double> d;
    std::optional<double> f;
    bool degenerate_branch{false};  // eps == m omega
    bool guard_tripped{false};      // generic-branch denominator below 1e-14
    double guard_denominator{0.0};
};

inline HarmonicConstants harmonic_constants(const ResonanceContext& c) {
    const auto& p = c.params();
    const int m = c.m();
    const int L = c.l_max();
    const double w = p.omega;
    const double eps = p.epsilon;
    HarmonicConstants h;
    for (int n = -L; n <= L; ++n) {
        if (n == -m) continue;
        h.a0 += c.dd(n) / c.den(c.eps_l(n), "harmonic_constants");
    }
    double bsum = 0.0;
    double csum = 0.0;
    for (int n = -L; n <= L; ++n) {
        if (n == 0) continue;
        const double nw = n * w;
        bsum += 1.0 / (4.0 * nw) *
                (c.dd(n - m) * c.dd(-m) / c.den(eps + (n - m) * w, "harmonic_constants") +
                 c.dd(-m - n) * c.dd(-m) / c.den(eps - (n + m) * w, "harmonic_constants"));
        for (int q = -L; q <= L; ++q) {
            if (q == -m || q == -n - m) continue;
            csum += c.dd(q) * c.dd(q + n) / (8.0 * nw) *
                    (1.0 / c.den(c.eps_l(q), "harmonic_constants") + 1.0 / c.den(c.eps_l(q + n), "harmonic_constants"));
        }
    }
    h.b0 = bsum + h.a0 * h.a0 / 8.0;
    h.c0 = csum;
    const double dl = p.delta;
    if (std::abs(eps - m * w) < 1e-9 * dl) {
        h.degenerate_branch = true;
        h.d = h.b0;
        h.f = -h.b0;
        return h;
    }
    const double th = mixing_angle(c, AngleOrder::vv2);
    const double a = h.a0 / dl, b = h.b0 / (dl * dl), cc = h.c0 / (dl * dl);
    const double ct = std::cos(th);
    const double den = 0.25 * a * a - 2.0 * b - 2.0 * cc * ct;
    h.guard_denominator = den;
    if (std::abs(den) < 1e-14) {
        h.guard_tripped = true;
        return h;
    }
    const double r = 0.25 * a * a - 2.0 * b - cc - 3.0 * cc * ct;
    const double root = r >= 0.0 ? std::sqrt(r) : std::nan("");
    h.d = dl * dl / den *
          (a / 16.0 - 0.75 * b * a * a + 2.0 * b + 2.0 * cc * cc - 2.0 * cc * (0.5 * a * a - 3.0 * b) * ct +
           2.0 * cc * cc * std::cos(2.0 * th) - 0.5 * a * r * root);
    h.f = dl * dl / den * (0.25 * cc * a * a - 2.0 * b * cc - 2.0 * cc * cc * ct);
    return h;
}

// cos^2(W t/2) + cos^2(Theta) sin^2(W t/2)
inline double two_level_survival(double omega, double theta, double t) {
    const double c = std::cos(0.5 * omega * t);
    const double s = std::sin(0.5 * omega * t);
    const double ct = std::cos(theta);
    return c * c + ct * ct * s * s;
}

// Closed-system survival P(t) for any mode pair, started in `s`.
inline double survival_from_modes(const ModePair& modes, const Eigen::Matrix2cd& rho0, double t,
                                  Spin s = Spin::down) {
    const Eigen::Matrix2cd u = modes.spinors(t);
    const int r = static_cast<int>(s);
    const cplx rho_mp = rho0(0, 1) * std::polar(1.0, modes.splitting() * t);
    const double rmm = rho0(0, 0).real();
    const cplx am = u(r, 0), ap = u(r, 1);
    return 2.0 * (am * std::conj(ap) * rho_mp).real() + std::norm(ap) + (std::norm(am) - std::norm(ap)) * rmm;
}

enum class SurvivalTier { rwa, vv1, vv2, vv2_averaged };

// Survival probability of |down> for the closed system on a time grid.
inline std::vector<double> survival_nondissipative(const ResonanceContext& c, SurvivalTier tier,
                                                   const std::vector<double>& times) {
    std::vector<double> out;
    out.reserve(times.size());
    switch (tier) {
        case SurvivalTier::rwa: {
            const double om = rwa_frequency(c), th = mixing_angle(c, AngleOrder::rwa);
            for (double t : times) out.push_back(two_level_survival(om, th, t));
            break;
        }
        case SurvivalTier::vv2_averaged: {
            const double om = vv2_frequency(c), th = mixing_angle(c, AngleOrder::vv2);
            for (double t : times) out.push_back(two_level_survival(om, th, t));
            break;
        }
        case SurvivalTier::vv1:
        case SurvivalTier::vv2: {
            const ModePair modes =
                vv_eigenstates(c, tier == SurvivalTier::vv1 ? StateOrder::order1 : StateOrder::order2).trimmed(1e-17);
            const Eigen::Matrix2cd rho0 = modes.initial_density(Spin::down);
            for (double t : times) out.push_back(survival_from_modes(modes, rho0, t));
            break;
        }
    }
    return out;
}

inline double survival_nondissipative(const ResonanceContext& c, SurvivalTier tier, double t) {
    return survival_nondissipative(c, tier, std::vector<double>{t}).front();
}

}  // namespace dtls
