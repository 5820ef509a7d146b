// bath.hpp: weak coupling to an Ohmic bath: noise kernel N(nu), position
// matrix Fourier coefficients, the MRWA rate tensor, relaxation/dephasing
// rates and the density-matrix evolution in the Floquet basis (analytic MRWA
// and the full time-dependent Floquet-Bloch-Redfield equation).
//
// Branch index: 0 = minus, 1 = plus. Density vector ordering (--, -+, +-, ++).

#pragma once

#include "dtls/core.hpp"
#include "dtls/floquet.hpp"
#include "dtls/vanvleck.hpp"

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dtls {

// N(nu) = G(nu) n_th(nu) = kappa nu / (exp(beta nu) - 1); N(0) = kappa / beta.
inline double bath_N(double nu, const BathParams& b) {
    b.validate();
    const double x = b.beta * nu;
    if (x == 0.0) return b.kappa / b.beta;
    return b.kappa * nu / std::expm1(x);
}

// G(nu) coth(beta nu / 2), continuous at 0 (2 kappa / beta).
inline double bath_G_coth(double nu, const BathParams& b) { return 2.0 * bath_N(nu, b) + b.kappa * nu; }

inline int default_harmonic_cutoff(const SystemParams& p) {
    return 2 * static_cast<int>(std::ceil(p.amp / p.omega)) + 8;
}

// X^{(n)}_{ab} for a, b in {minus, plus} and |n| <= n_max.
struct XTable {
    int n_max{0};
    std::array<std::array<std::vector<cplx>, 2>, 2> x;

    explicit XTable(int nmax = 0) : n_max(nmax) {
        for (auto& row : x)
            for (auto& v : row) v.assign(2 * static_cast<std::size_t>(nmax) + 1, cplx{});
    }

    cplx operator()(int a, int b, int n) const {
        if (n < -n_max || n > n_max) return {};
        return x[a][b][static_cast<std::size_t>(n + n_max)];
    }
    cplx& at(int a, int b, int n) { return x[a][b][static_cast<std::size_t>(n + n_max)]; }
};

inline XTable numeric_xtable(const ModePair& modes, int n_max, Diagnostics* diag = nullptr) {
    XTable t(n_max);
    const CompositeState* st[2] = {&modes.minus, &modes.plus};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int n = -n_max; n <= n_max; ++n) t.at(a, b, n) = numeric_position_coeffs(*st[a], *st[b], n, diag);
    return t;
}

enum class XOrder { rwa, vv1, vv2 };

namespace detail {

inline double x_mp_first(const ResonanceContext& c, int n, double xi) {
    const int m = c.m();
    const double w = c.params().omega, eps = c.params().epsilon;
    if (n == m) return 0.5 * std::sin(xi);
    const double sg = sign_or_plus(c.dd(-m));
    const double s2 = std::sin(0.5 * xi), c2 = std::cos(0.5 * xi);
    return -0.5 * sg *
           (s2 * s2 * c.dd(-n) / c.den(-eps + n * w, "analytic_position_coeffs") +
            c2 * c2 * c.dd(n - 2 * m) / c.den(eps + (n - 2 * m) * w, "analytic_position_coeffs"));
}

inline double x_mm_first(const ResonanceContext& c, int n, double xi) {
    const int m = c.m();
    const double w = c.params().omega, eps = c.params().epsilon;
    if (n == 0) return -0.5 * std::cos(xi);
    const double sg = sign_or_plus(c.dd(-m));
    return 0.25 * sg * std::sin(xi) *
           (c.dd(-m - n) / c.den(-eps + (m + n) * w, "analytic_position_coeffs") -
            c.dd(n - m) / c.den(eps + (n - m) * w, "analytic_position_coeffs"));
}

inline double x_mp_second(const ResonanceContext& c, int n, double th) {
    const int m = c.m();
    const double w = c.params().omega, eps = c.params().epsilon;
    double s = 0.0;
    for (int k = -c.l_max(); k <= c.l_max(); ++k) {
        if (k == n || k == m) continue;
        s += c.dd(n - k - m) * c.dd(-k) /
             (c.den(eps + (n - k - m) * w, "analytic_position_coeffs") * c.den(-eps + k * w, "analytic_position_coeffs"));
    }
    return std::sin(th) / 8.0 * s;
}

inline double x_mm_second(const ResonanceContext& c, int n, double th) {
    const int m = c.m();
    const double w = c.params().omega, eps = c.params().epsilon;
    double s = 0.0;
    for (int k = -c.l_max(); k <= c.l_max(); ++k) {
        if (k == n + m || k == m) continue;
        s += c.dd(n - k) * c.dd(-k) /
             (c.den(eps + (n - k) * w, "analytic_position_coeffs") * c.den(-eps + k * w, "analytic_position_coeffs"));
    }
    return -std::cos(th) / 8.0 * s;
}

}  // namespace detail

// Closed-form X^{(n)}_{ab}. rwa: delta-function forms; vv1: first-order
// kernels with the RWA angle; vv2: second-order forms with Theta_m.
inline cplx analytic_position_coeffs(const ResonanceContext& c, Branch a, Branch b, int n, XOrder order) {
    const int m = c.m();
    const double th = mixing_angle(c, order == XOrder::vv2 ? AngleOrder::vv2 : AngleOrder::rwa);
    auto mp = [&](int k) -> double {
        switch (order) {
            case XOrder::rwa: return k == m ? 0.5 * std::sin(th) : 0.0;
            case XOrder::vv1: return detail::x_mp_first(c, k, th);
            case XOrder::vv2: return detail::x_mp_first(c, k, th) + detail::x_mp_second(c, k, th);
        }
        return 0.0;
    };
    auto mm = [&](int k) -> double {
        switch (order) {
            case XOrder::rwa: return k == 0 ? -0.5 * std::cos(th) : 0.0;
            case XOrder::vv1: return detail::x_mm_first(c, k, th);
            case XOrder::vv2: return detail::x_mm_first(c, k, th) + detail::x_mm_second(c, k, th);
        }
        return 0.0;
    };
    if (a == Branch::minus && b == Branch::plus) return mp(n);
    if (a == Branch::plus && b == Branch::minus) return std::conj(cplx(mp(-n)));
    if (a == Branch::minus) return mm(n);
    return -mm(n);
}

inline XTable analytic_xtable(const ResonanceContext& c, XOrder order, int n_max) {
    XTable t(n_max);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int n = -n_max; n <= n_max; ++n)
                t.at(a, b, n) = analytic_position_coeffs(c, static_cast<Branch>(a), static_cast<Branch>(b), n, order);
    return t;
}

// Quasienergies eps_- , eps_+ of the representatives Phi_{-,0}, Phi_{+,0}.
struct DoubletEnergies {
    double e_minus{0.0};
    double e_plus{0.0};
    double e(int a) const noexcept { return a == 0 ? e_minus : e_plus; }
};

inline DoubletEnergies energies_of(const ModePair& m) { return {m.e_minus, m.e_plus}; }

using RateTensor = Eigen::Matrix4cd;  // L(ab, a'b'), index 2a + b

inline constexpr int pair_index(int a, int b) noexcept { return 2 * a + b; }

// Time-independent MRWA tensor (terms n' = -n of the Floquet-Bloch-Redfield
// coefficients).
inline RateTensor mrwa_coefficients(const XTable& X, const DoubletEnergies& en, const BathParams& b,
                                    const SystemParams& p, Diagnostics* diag = nullptr) {
    b.validate();
    const double w = p.omega;
    auto Nab = [&](int a, int c, int n) { return bath_N(en.e(a) - en.e(c) + n * w, b); };
    RateTensor L = RateTensor::Zero();
    RateTensor edge = RateTensor::Zero();
    for (int n = -X.n_max; n <= X.n_max; ++n) {
        RateTensor term = RateTensor::Zero();
        for (int al = 0; al < 2; ++al)
            for (int be = 0; be < 2; ++be)
                for (int alp = 0; alp < 2; ++alp)
                    for (int bep = 0; bep < 2; ++bep) {
                        cplx v = (Nab(al, alp, n) + Nab(be, bep, n)) * X(al, alp, n) * X(bep, be, -n);
                        if (be == bep)
                            for (int bpp = 0; bpp < 2; ++bpp) v -= X(al, bpp, -n) * Nab(bpp, alp, n) * X(bpp, alp, n);
                        if (al == alp)
                            for (int app = 0; app < 2; ++app) v -= Nab(app, bep, -n) * X(bep, app, n) * X(app, be, -n);
                        term(pair_index(al, be), pair_index(alp, bep)) = v;
                    }
        L += term;
        if (std::abs(n) == X.n_max) edge += term;
    }
    if (diag != nullptr && X.n_max > 0) {
        const double tail = edge.cwiseAbs().maxCoeff();
        const double total = L.cwiseAbs().maxCoeff();
        if (total > 0.0 && tail > 1e-10 * total)
            diag->warn("mrwa_coefficients: harmonic tail " + std::to_string(tail / total) + " of running sum at n_max = " +
                       std::to_string(X.n_max));
    }
    return L;
}

// Max residual of the four symmetry identities of the MRWA tensor.
inline double mrwa_symmetry_residual(const RateTensor& L) {
    const int mm = pair_index(0, 0), mp = pair_index(0, 1), pm = pair_index(1, 0), pp = pair_index(1, 1);
    double r = 0.0;
    for (int aa : {mm, pp}) {
        r = std::max(r, std::abs(L(aa, mp) - L(aa, pm)));
        r = std::max(r, std::abs(L(mp, aa) - L(pm, aa)));
    }
    r = std::max(r, std::abs(L(mp, mp) - L(pm, pm)));
    r = std::max(r, std::abs(L(mp, pm) - L(pm, mp)));
    return r;
}

inline double gamma_rel_of(const RateTensor& L) {
    return pi * (L(pair_index(0, 0), pair_index(1, 1)) - L(pair_index(0, 0), pair_index(0, 0))).real();
}
inline double gamma_deph_of(const RateTensor& L) { return -pi * L(pair_index(0, 1), pair_index(0, 1)).real(); }

// Stationary rho_-- of the population equation, pi L_{--,++} / gamma_rel.
inline double stationary_population(const RateTensor& L) {
    return pi * L(pair_index(0, 0), pair_index(1, 1)).real() / gamma_rel_of(L);
}

enum class RateMethod { rwa, vv2 };

struct RateSet {
    double gamma_rel{0.0};
    double gamma_deph{0.0};
    std::map<int, std::pair<double, double>> per_harmonic;  // n -> (rel, deph)
    RateMethod method{RateMethod::vv2};
};

// Closed-form rates. For the dephasing sidebands the second denominator is
// eps + (n - m) omega, the form consistent with the X_{--} kernel.
inline RateSet rates(const ResonanceContext& c, const BathParams& b, RateMethod method, int n_max = -1) {
    b.validate();
    const auto& p = c.params();
    const int m = c.m();
    const double w = p.omega, eps = p.epsilon;
    RateSet r;
    r.method = method;
    if (method == RateMethod::rwa) {
        const double om = rwa_frequency(c), th = mixing_angle(c, AngleOrder::rwa);
        const double s = std::sin(th), ct = std::cos(th);
        const double grel = pi * 0.5 * bath_G_coth(om, b) * s * s;
        const double gdeph = 0.5 * grel + pi * bath_N(0.0, b) * ct * ct;
        r.gamma_rel = grel;
        r.gamma_deph = gdeph;
        r.per_harmonic[0] = {grel, gdeph};
        return r;
    }
    if (n_max < 0) n_max = default_harmonic_cutoff(p);
    const double om = vv2_frequency(c), th = mixing_angle(c, AngleOrder::vv2);
    const double s = std::sin(th), ct = std::cos(th);
    const double s2 = std::sin(0.5 * th), c2 = std::cos(0.5 * th);
    double corr = 1.0;
    for (int k = -c.l_max(); k <= c.l_max(); ++k) {
        if (k == m) continue;
        const double d = c.dd(-k) / c.den(eps - k * w, "rates");
        corr -= 0.5 * d * d;
    }
    // pi G(x/2) coth(beta x / 2) = pi/2 * G(x) coth(beta x/2)
    const double grel0 = pi * 0.5 * bath_G_coth(om, b) * s * s * corr;
    double grel = grel0;
    std::map<int, double> rel_n, deph_n;
    for (int n = -n_max; n <= n_max; ++n) {
        if (n == 0) continue;
        const double br = -s2 * s2 * c.dd(-(n + m)) / c.den(eps - (n + m) * w, "rates") +
                          c2 * c2 * c.dd(n - m) / c.den(eps + (n - m) * w, "rates");
        const double g = pi * 0.5 * bath_G_coth(om - n * w, b) * br * br;
        rel_n[n] = g;
        grel += g;
        const double bd = c.dd(-m - n) / c.den(-eps + (m + n) * w, "rates") -
                          c.dd(n - m) / c.den(eps + (n - m) * w, "rates");
        // G(n w) [coth(beta n w / 2) - 1] = 2 N(n w)
        deph_n[n] = pi / 8.0 * 2.0 * bath_N(n * w, b) * s * s * bd * bd;
    }
    const double gdeph0 = 0.5 * grel + pi * bath_N(0.0, b) * ct * ct * corr;
    double gdeph = gdeph0;
    for (const auto& [n, v] : deph_n) gdeph += v;
    r.gamma_rel = grel;
    r.gamma_deph = gdeph;
    r.per_harmonic[0] = {grel0, gdeph0};
    for (int n = -n_max; n <= n_max; ++n)
        if (n != 0) r.per_harmonic[n] = {rel_n[n], deph_n[n]};
    return r;
}

// Rates from position coefficients:
// gamma_rel  = 4 pi sum_n [N_{-+,n} + kappa nu_n / 2] |X_{-+}^n|^2,
// gamma_deph = gamma_rel / 2 + 4 pi sum_n N_{--,n} |X_{--}^n|^2.
inline std::pair<double, double> rates_from_x(const XTable& X, const DoubletEnergies& en, const BathParams& b,
                                              const SystemParams& p) {
    double grel = 0.0, gd = 0.0;
    for (int n = -X.n_max; n <= X.n_max; ++n) {
        const double nu = en.e_minus - en.e_plus + n * p.omega;
        grel += 4.0 * pi * (bath_N(nu, b) + 0.5 * b.kappa * nu) * std::norm(X(0, 1, n));
        gd += 4.0 * pi * bath_N(n * p.omega, b) * std::norm(X(0, 0, n));
    }
    return {grel, 0.5 * grel + gd};
}

enum class DensitySource { analytic_mrwa, numeric_fbr };

struct DensityTrajectory {
    std::vector<double> times;
    std::vector<double> rho_mm;
    std::vector<cplx> rho_mp;
    DensitySource source{DensitySource::analytic_mrwa};
    SolutionTier tier{SolutionTier::vv2};
};

inline Eigen::Vector4cd vec_density(const Eigen::Matrix2cd& r) { return {r(0, 0), r(0, 1), r(1, 0), r(1, 1)}; }

// Generator of the MRWA master equation, d/dt vec(rho) = M vec(rho).
inline Eigen::Matrix4cd mrwa_generator(const RateTensor& L, const DoubletEnergies& en) {
    Eigen::Matrix4cd M = pi * L;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) M(pair_index(a, b), pair_index(a, b)) += cplx(0.0, -(en.e(a) - en.e(b)));
    return M;
}

// Exact solution of the constant-coefficient MRWA equation,
// rho(t) = exp(M t) rho(0).
inline DensityTrajectory mrwa_evolution(const RateTensor& L, const DoubletEnergies& en, const Eigen::Matrix2cd& rho0,
                                        const std::vector<double>& times, SolutionTier tier) {
    const Eigen::Matrix4cd M = mrwa_generator(L, en);
    const Eigen::Vector4cd r0 = vec_density(rho0);
    DensityTrajectory out;
    out.source = DensitySource::analytic_mrwa;
    out.tier = tier;
    out.times = times;
    out.rho_mm.reserve(times.size());
    out.rho_mp.reserve(times.size());
    for (double t : times) {
        const Eigen::Matrix4cd Mt = M * t;
        const Eigen::Vector4cd r = Mt.exp() * r0;
        out.rho_mm.push_back(r(0).real());
        out.rho_mp.push_back(r(1));
    }
    return out;
}

// Analytic tier: Van Vleck (or RWA) coefficients and modes, MRWA tensor,
// exact modal evolution.
struct AnalyticDissipative {
    ModePair modes;
    XTable X;
    RateTensor L;
    DensityTrajectory rho;
};

inline AnalyticDissipative analytic_density_evolution(const ResonanceContext& c, const BathParams& b, XOrder order,
                                                      const std::vector<double>& times,
                                                      std::optional<Eigen::Matrix2cd> rho0 = std::nullopt,
                                                      Diagnostics* diag = nullptr) {
    AnalyticDissipative r{order == XOrder::rwa   ? rwa_modes(c)
                          : order == XOrder::vv1 ? vv_eigenstates(c, StateOrder::order1)
                                                 : vv_eigenstates(c, StateOrder::order2),
                          XTable{}, RateTensor::Zero(), DensityTrajectory{}};
    r.modes = r.modes.trimmed(1e-17);
    r.X = analytic_xtable(c, order, default_harmonic_cutoff(c.params()));
    const DoubletEnergies en = energies_of(r.modes);
    r.L = mrwa_coefficients(r.X, en, b, c.params(), diag);
    const Eigen::Matrix2cd r0 = rho0.value_or(r.modes.initial_density(Spin::down));
    r.rho = mrwa_evolution(r.L, en, r0, times, r.modes.tier);
    return r;
}

// The printed first-order-in-kappa expressions for rho_--(t), rho_-+(t),
// with c_rel, c_deph fixed by rho(0).
struct MrwaFirstOrder {
    cplx c_rel;
    cplx c_deph;
    double gamma_rel;
    double gamma_deph;
    double nu;  // m omega + Omega
    RateTensor L;

    // Complex-valued right-hand sides of the two printed expressions.
    std::pair<cplx, cplx> raw(double t) const {
        const int mm = pair_index(0, 0), mp = pair_index(0, 1), pm = pair_index(1, 0), pp = pair_index(1, 1);
        const cplx i(0.0, 1.0);
        const double er = std::exp(-gamma_rel * t);
        const double ed = std::exp(-gamma_deph * t);
        const cplx rmm = pi * L(mm, pp) / gamma_rel + c_rel * i / pi * nu * er +
                         2.0 * L(mm, mp) * (c_deph * std::polar(1.0, -nu * t)).real() * ed;
        const cplx rmp = c_rel * (L(mp, pp) - L(mp, mm)) * er + 0.5 * L(mp, pm) * c_deph * std::polar(1.0, -nu * t) * ed +
                         std::conj(c_deph) * i / pi * nu * std::polar(1.0, nu * t) * ed;
        return {rmm, rmp};
    }

    std::pair<double, cplx> operator()(double t) const {
        const auto [rmm, rmp] = raw(t);
        return {rmm.real(), rmp};
    }
};

inline MrwaFirstOrder mrwa_first_order(const RateTensor& L, double nu, const Eigen::Matrix2cd& rho0) {
    MrwaFirstOrder f{{}, {}, gamma_rel_of(L), gamma_deph_of(L), nu, L};
    // Both expressions are real-linear in (c_rel, c_deph): four real
    // conditions from rho_--(0) (real, with vanishing imaginary part) and rho_-+(0).
    const auto [b_mm, b_mp] = f.raw(0.0);
    const std::array<std::pair<cplx, cplx>, 4> basis{
        {{1.0, 0.0}, {cplx(0, 1), 0.0}, {0.0, 1.0}, {0.0, cplx(0, 1)}}};
    Eigen::Matrix4d A;
    for (int j = 0; j < 4; ++j) {
        MrwaFirstOrder q = f;
        q.c_rel = basis[static_cast<std::size_t>(j)].first;
        q.c_deph = basis[static_cast<std::size_t>(j)].second;
        const auto [v_mm, v_mp] = q.raw(0.0);
        A(0, j) = (v_mm - b_mm).real();
        A(1, j) = (v_mm - b_mm).imag();
        A(2, j) = (v_mp - b_mp).real();
        A(3, j) = (v_mp - b_mp).imag();
    }
    Eigen::Vector4d y;
    y << rho0(0, 0).real() - b_mm.real(), -b_mm.imag(), (rho0(0, 1) - b_mp).real(), (rho0(0, 1) - b_mp).imag();
    const Eigen::Vector4d sol = A.colPivHouseholderQr().solve(y);
    f.c_rel = cplx(sol(0), sol(1));
    f.c_deph = cplx(sol(2), sol(3));
    return f;
}

// Time-dependent Floquet-Bloch-Redfield coefficients L(t), built from
// harmonic sums x_ab(t), y_ab(t) (with N_{ab,n}) and w_ab(t) (with
// N(eps_b - eps_a - n omega)).
class FbrCoefficients {
public:
    FbrCoefficients(XTable X, DoubletEnergies en, BathParams b, SystemParams p)
        : X_(std::move(X)), en_(en), p_(p) {
        const int nn = 2 * X_.n_max + 1;
        for (int a = 0; a < 2; ++a)
            for (int c = 0; c < 2; ++c) {
                ny_[a][c].resize(static_cast<std::size_t>(nn));
                nw_[a][c].resize(static_cast<std::size_t>(nn));
                for (int n = -X_.n_max; n <= X_.n_max; ++n) {
                    const auto k = static_cast<std::size_t>(n + X_.n_max);
                    ny_[a][c][k] = bath_N(en_.e(a) - en_.e(c) + n * p_.omega, b) * X_(a, c, n);
                    nw_[a][c][k] = bath_N(en_.e(c) - en_.e(a) - n * p_.omega, b) * X_(a, c, n);
                }
            }
    }

    RateTensor at(double t) const {
        std::array<std::array<cplx, 2>, 2> x{}, y{}, w{};
        const cplx step = std::polar(1.0, p_.omega * t);
        for (int a = 0; a < 2; ++a)
            for (int c = 0; c < 2; ++c) {
                cplx ph = std::polar(1.0, -X_.n_max * p_.omega * t);
                cplx sx{}, sy{}, sw{};
                for (int n = -X_.n_max; n <= X_.n_max; ++n) {
                    const auto k = static_cast<std::size_t>(n + X_.n_max);
                    sx += ph * X_.x[a][c][k];
                    sy += ph * ny_[a][c][k];
                    sw += ph * nw_[a][c][k];
                    ph *= step;
                }
                x[a][c] = sx;
                y[a][c] = sy;
                w[a][c] = sw;
            }
        RateTensor L;
        for (int al = 0; al < 2; ++al)
            for (int be = 0; be < 2; ++be)
                for (int alp = 0; alp < 2; ++alp)
                    for (int bep = 0; bep < 2; ++bep) {
                        cplx v = y[al][alp] * x[bep][be] + x[al][alp] * w[bep][be];
                        if (be == bep)
                            for (int q = 0; q < 2; ++q) v -= x[al][q] * y[q][alp];
                        if (al == alp)
                            for (int q = 0; q < 2; ++q) v -= w[bep][q] * x[q][be];
                        L(pair_index(al, be), pair_index(alp, bep)) = v;
                    }
        return L;
    }

    const DoubletEnergies& energies() const noexcept { return en_; }

private:
    XTable X_;
    DoubletEnergies en_;
    SystemParams p_;
    std::array<std::array<std::vector<cplx>, 2>, 2> ny_, nw_;
};

struct FbrOptions {
    double rtol{1e-8};
    double atol{1e-10};
    int n_max{-1};  // -1: default_harmonic_cutoff
};

// Integrates the full master equation on t_grid for the given numeric modes.
// State (rho_--, Re rho_-+, Im rho_-+); rho_++ = 1 - rho_--, rho_+- = rho_-+^*.
inline DensityTrajectory numeric_fbr_solve(const ModePair& modes, const BathParams& b, const Eigen::Matrix2cd& rho0,
                                           const std::vector<double>& t_grid, FbrOptions opt = {},
                                           Diagnostics* diag = nullptr) {
    b.validate();
    if (t_grid.empty()) throw validation_error("numeric_fbr_solve: empty time grid");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (!(t_grid[i] > t_grid[i - 1])) throw validation_error("numeric_fbr_solve: time grid must increase");
    const int n_max = opt.n_max < 0 ? default_harmonic_cutoff(modes.p) : opt.n_max;
    const XTable X = numeric_xtable(modes, n_max, diag);
    const DoubletEnergies en = energies_of(modes);
    const FbrCoefficients coeff(X, en, b, modes.p);
    const double nu_mp = en.e_plus - en.e_minus;  // -i(eps_- - eps_+) = i nu
    const bool dissipative = b.kappa > 0.0;

    using state_t = std::array<double, 3>;
    auto rhs = [&](const state_t& s, state_t& ds, double t) {
        const cplx rmm = s[0], rmp(s[1], s[2]);
        const Eigen::Vector4cd r(rmm, rmp, std::conj(rmp), 1.0 - rmm);
        Eigen::Vector4cd d = Eigen::Vector4cd::Zero();
        if (dissipative) d = pi * (coeff.at(t) * r);
        d(1) += cplx(0.0, nu_mp) * rmp;
        ds[0] = d(0).real();
        ds[1] = d(1).real();
        ds[2] = d(1).imag();
    };

    DensityTrajectory out;
    out.source = DensitySource::numeric_fbr;
    out.tier = modes.tier;
    out.times = t_grid;
    out.rho_mm.reserve(t_grid.size());
    out.rho_mp.reserve(t_grid.size());
    state_t s{rho0(0, 0).real(), rho0(0, 1).real(), rho0(0, 1).imag()};
    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_dense_output(opt.atol, opt.rtol, ode::runge_kutta_dopri5<state_t>());
    double worst = 0.0;
    auto observer = [&](const state_t& x, double t) {
        if (!std::isfinite(x[0]) || !std::isfinite(x[1]) || !std::isfinite(x[2]))
            throw numerical_error("numeric_fbr_solve: non-finite state at t = " + std::to_string(t));
        out.rho_mm.push_back(x[0]);
        out.rho_mp.push_back(cplx(x[1], x[2]));
        const double viol = std::max({-x[0], x[0] - 1.0, x[1] * x[1] + x[2] * x[2] - x[0] * (1.0 - x[0])});
        worst = std::max(worst, viol);
    };
    const double dt0 = std::min(0.01 * modes.p.period(), t_grid.size() > 1 ? t_grid[1] - t_grid[0] : 0.01);
    try {
        ode::integrate_times(stepper, rhs, s, t_grid.begin(), t_grid.end(), dt0, observer);
    } catch (const numerical_error&) {
        throw;
    } catch (const std::exception& e) {
        throw numerical_error(std::string("numeric_fbr_solve: step-size control failed: ") + e.what());
    }
    if (diag != nullptr && worst > 1e-3)
        diag->warn("numeric_fbr_solve: density positivity violated by " + std::to_string(worst));
    return out;
}

}  // namespace dtls
