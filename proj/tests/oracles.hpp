#pragma once
// Independent reference computations shared by the test suites. Nothing here
// reuses library numerics beyond the parameter structs.

#include "dtls/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
using Spinor = Eigen::Vector2cd;

// i d/dt psi = H(t) psi with H = -1/2 [delta sx + (eps + A cos wt) sz],
// classic fixed-step RK4. Components are (up, down).
inline Spinor schrodinger_rhs(const dtls::SystemParams& p, double t, const Spinor& y) {
    const double bz = p.epsilon + p.amp * std::cos(p.omega * t);
    const cplx mi{0.0, -1.0};
    Spinor h;
    h[0] = -0.5 * (bz * y[0] + p.delta * y[1]);
    h[1] = -0.5 * (p.delta * y[0] - bz * y[1]);
    return mi * h;
}

// Returns psi at each requested time (ascending); dt is the maximal step.
inline std::vector<Spinor> schrodinger_rk4(const dtls::SystemParams& p, Spinor psi, const std::vector<double>& times,
                                           double dt = 1e-3) {
    std::vector<Spinor> out;
    out.reserve(times.size());
    double t = 0.0;
    for (double target : times) {
        while (t < target) {
            const double h = std::min(dt, target - t);
            const Spinor k1 = schrodinger_rhs(p, t, psi);
            const Spinor k2 = schrodinger_rhs(p, t + 0.5 * h, psi + 0.5 * h * k1);
            const Spinor k3 = schrodinger_rhs(p, t + 0.5 * h, psi + 0.5 * h * k2);
            const Spinor k4 = schrodinger_rhs(p, t + h, psi + h * k3);
            psi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h;
        }
        out.push_back(psi);
    }
    return out;
}

// Survival of |down> from direct time stepping.
inline std::vector<double> survival_rk4(const dtls::SystemParams& p, const std::vector<double>& times,
                                        double dt = 1e-3) {
    const auto psi = schrodinger_rk4(p, Spinor(0.0, 1.0), times, dt);
    std::vector<double> out;
    for (const auto& s : psi) out.push_back(std::norm(s[1]));
    return out;
}

// Number of eigenvalues of symmetric m below sigma, by Sylvester inertia of
// m - sigma I from an unpivoted LDL^T in long double.
inline int count_below(const Eigen::MatrixXd& m, double sigma) {
    const int n = static_cast<int>(m.rows());
    std::vector<long double> a(static_cast<std::size_t>(n * n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a[i * n + j] = m(i, j) - (i == j ? sigma : 0.0);
    int neg = 0;
    for (int k = 0; k < n; ++k) {
        long double d = a[k * n + k];
        if (d == 0.0L) d = 1e-30L;
        if (d < 0.0L) ++neg;
        for (int i = k + 1; i < n; ++i) {
            const long double f = a[i * n + k] / d;
            for (int j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
        }
    }
    return neg;
}

// All eigenvalues by bisection on the inertia count.
inline std::vector<double> eigenvalues_bisection(const Eigen::MatrixXd& m, double tol = 1e-12) {
    const int n = static_cast<int>(m.rows());
    double r = 0.0;
    for (int i = 0; i < n; ++i) r = std::max(r, m.row(i).cwiseAbs().sum());
    std::vector<double> out;
    for (int k = 0; k < n; ++k) {
        double lo = -r - 1.0, hi = r + 1.0;
        while (hi - lo > tol) {
            const double mid = 0.5 * (lo + hi);
            if (count_below(m, mid) > k) hi = mid;
            else lo = mid;
        }
        out.push_back(0.5 * (lo + hi));
    }
    return out;
}

}  // namespace oracle
