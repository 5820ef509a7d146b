// floquet.hpp: truncated Floquet matrix of the driven TLS in the basis of
// unperturbed Floquet states |u0_{spin,n}>, its diagonalization, quasienergy
// folding, doublet selection and exact position-matrix Fourier coefficients.
//
// Basis ordering: index(spin, n) = 2 * (n + n_tr) + spin, n in [-n_tr, n_tr].
// Diagonal:      up: -epsilon/2 - n*omega,  down: +epsilon/2 - n*omega.
// Off-diagonal:  <<u_up,n| H |u_down,l>> = -delta_{n-l} / 2.

#pragma once

#include "dtls/core.hpp"
#include "dtls/special_functions.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dtls {

using cplx = std::complex<double>;

struct FloquetBasisIndex {
    Spin spin{Spin::up};
    int photon{0};

    friend bool operator==(const FloquetBasisIndex&, const FloquetBasisIndex&) = default;
};

struct TruncationConfig {
    int n_tr{10};
    double tol_conv{1e-10};

    void validate() const {
        if (n_tr < 4) throw validation_error("TruncationConfig: n_tr must be >= 4");
        if (!(tol_conv > 0.0)) throw validation_error("TruncationConfig: tol_conv must be > 0");
    }

    // ceil(2 A/omega + |eps|/omega) + 10, tolerance 1e-10 * delta.
    static TruncationConfig defaults_for(const SystemParams& p) {
        TruncationConfig tr;
        tr.n_tr = static_cast<int>(std::ceil(2.0 * p.amp / p.omega + std::abs(p.epsilon) / p.omega)) + 10;
        tr.tol_conv = 1e-10 * p.delta;
        return tr;
    }
};

// Collected non-fatal diagnostics (truncation warnings, positivity, ...).
struct Diagnostics {
    std::vector<std::string> warnings;
    void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

// State in the composite space H (x) T, expanded on |u0_{spin,n}>, |n| <= n_tr.
class CompositeState {
public:
    CompositeState() = default;
    explicit CompositeState(int n_tr) : n_tr_(n_tr), amps_(Eigen::VectorXcd::Zero(2 * (2 * n_tr + 1))) {}
    CompositeState(int n_tr, Eigen::VectorXcd amps) : n_tr_(n_tr), amps_(std::move(amps)) {
        if (amps_.size() != 2 * (2 * n_tr_ + 1))
            throw validation_error("CompositeState: amplitude vector does not match ladder size");
    }

    int n_tr() const noexcept { return n_tr_; }
    const Eigen::VectorXcd& amplitudes() const noexcept { return amps_; }

    static Eigen::Index index(Spin s, int n, int n_tr) noexcept {
        return 2 * static_cast<Eigen::Index>(n + n_tr) + static_cast<int>(s);
    }

    bool contains(int n) const noexcept { return n >= -n_tr_ && n <= n_tr_; }

    cplx operator()(Spin s, int n) const noexcept {
        return contains(n) ? amps_[index(s, n, n_tr_)] : cplx{0.0, 0.0};
    }

    cplx& at(Spin s, int n) {
        if (!contains(n)) throw validation_error("CompositeState: photon index outside ladder");
        return amps_[index(s, n, n_tr_)];
    }

    void add(Spin s, int n, cplx v) {
        if (contains(n)) amps_[index(s, n, n_tr_)] += v;
    }

    double norm() const { return amps_.norm(); }

    void normalize() {
        const double nrm = norm();
        if (nrm == 0.0) throw numerical_error("CompositeState: cannot normalize zero state");
        amps_ /= nrm;
    }

    CompositeState& operator*=(cplx f) {
        amps_ *= f;
        return *this;
    }

    // <<this | other>> over the common photon window.
    cplx inner(const CompositeState& other) const {
        const int w = std::min(n_tr_, other.n_tr_);
        cplx acc{0.0, 0.0};
        for (int n = -w; n <= w; ++n) {
            for (Spin s : {Spin::up, Spin::down}) acc += std::conj((*this)(s, n)) * other(s, n);
        }
        return acc;
    }

    // |u_{alpha,n+l}>: amplitudes move up the ladder by l photons.
    CompositeState shifted(int l) const {
        CompositeState out(n_tr_);
        for (int n = -n_tr_; n <= n_tr_; ++n) {
            for (Spin s : {Spin::up, Spin::down}) out.add(s, n, (*this)(s, n - l));
        }
        return out;
    }

    // Norm carried by the outermost `edge` photon indices on each side.
    double edge_weight(int edge = 1) const {
        double w = 0.0;
        for (int n = -n_tr_; n <= n_tr_; ++n) {
            if (n > -n_tr_ + edge - 1 && n < n_tr_ - edge + 1) continue;
            for (Spin s : {Spin::up, Spin::down}) w += std::norm((*this)(s, n));
        }
        return w;
    }

    // Copy restricted to the smallest symmetric window holding every
    // amplitude above `tol`.
    CompositeState trimmed(double tol = 0.0) const {
        int w = 0;
        for (int n = -n_tr_; n <= n_tr_; ++n) {
            for (Spin s : {Spin::up, Spin::down}) {
                if (std::abs((*this)(s, n)) > tol) w = std::max(w, std::abs(n));
            }
        }
        CompositeState out(w);
        for (int n = -w; n <= w; ++n) {
            for (Spin s : {Spin::up, Spin::down}) out.at(s, n) = (*this)(s, n);
        }
        return out;
    }

    // <spin | Phi(t)> for the T-periodic Floquet mode represented by this state.
    cplx spin_amplitude(Spin s, double t, const SystemParams& p) const {
        const double wt = p.omega * t;
        const double dress = 0.5 * p.amp / p.omega * std::sin(wt);
        cplx acc{0.0, 0.0};
        const cplx step = std::polar(1.0, -wt);
        cplx phase = std::polar(1.0, static_cast<double>(n_tr_) * wt);  // e^{-i n wt} at n = -n_tr
        for (int n = -n_tr_; n <= n_tr_; ++n) {
            acc += amps_[index(s, n, n_tr_)] * phase;
            phase *= step;
        }
        return acc * std::polar(1.0, s == Spin::up ? dress : -dress);
    }

private:
    int n_tr_{0};
    Eigen::VectorXcd amps_{Eigen::VectorXcd::Zero(2)};
};

struct FloquetMatrix {
    int n_tr{0};
    Eigen::MatrixXd h;

    Eigen::Index index(Spin s, int n) const noexcept { return CompositeState::index(s, n, n_tr); }
};

// The matrix is real: diagonal quasienergies and J_n(A/omega) * delta couplings.
inline FloquetMatrix build_floquet_matrix(const SystemParams& p, const TruncationConfig& tr) {
    p.validate();
    tr.validate();
    const int n_tr = tr.n_tr;
    const int dim = 2 * (2 * n_tr + 1);
    FloquetMatrix fm{n_tr, Eigen::MatrixXd::Zero(dim, dim)};
    const int kmax = std::min(2 * n_tr, bessel_order_ceiling);
    const BesselTable jt(kmax, p.drive_ratio());
    for (int n = -n_tr; n <= n_tr; ++n) {
        fm.h(fm.index(Spin::up, n), fm.index(Spin::up, n)) = -0.5 * p.epsilon - n * p.omega;
        fm.h(fm.index(Spin::down, n), fm.index(Spin::down, n)) = 0.5 * p.epsilon - n * p.omega;
    }
    for (int n = -n_tr; n <= n_tr; ++n) {
        for (int l = -n_tr; l <= n_tr; ++l) {
            const double v = -0.5 * p.delta * jt(n - l);
            fm.h(fm.index(Spin::up, n), fm.index(Spin::down, l)) = v;
            fm.h(fm.index(Spin::down, l), fm.index(Spin::up, n)) = v;
        }
    }
    return fm;
}

// Map a quasienergy into the first Brillouin zone [-omega/2, omega/2).
inline double fold_quasienergy(double e, double omega) {
    if (!(omega > 0.0)) throw validation_error("fold_quasienergy: omega must be > 0");
    double r = e - omega * std::floor((e + 0.5 * omega) / omega);
    if (r >= 0.5 * omega) r -= omega;
    if (r < -0.5 * omega) r += omega;
    return r;
}

struct QuasienergyLabel {
    Branch branch{Branch::minus};
    int brillouin_copy{0};  // raw = folded + copy * omega
};

struct FloquetSpectrum {
    int n_tr{0};
    double omega{1.0};
    Eigen::VectorXd raw;       // ascending
    Eigen::VectorXd folded;    // each raw value mapped to [-omega/2, omega/2)
    Eigen::MatrixXd vectors;   // columns, real orthonormal
    std::vector<QuasienergyLabel> labels;

    Eigen::Index size() const noexcept { return raw.size(); }

    CompositeState state(Eigen::Index i) const {
        return CompositeState(n_tr, vectors.col(i).cast<cplx>());
    }

    // The two central-zone quasienergies (folded values of the two
    // eigenstates closest to zero), ascending.
    std::array<double, 2> central_pair() const {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(raw.size()));
        for (Eigen::Index i = 0; i < raw.size(); ++i) order[static_cast<std::size_t>(i)] = i;
        std::partial_sort(order.begin(), order.begin() + 2, order.end(),
                          [&](Eigen::Index a, Eigen::Index b) { return std::abs(raw[a]) < std::abs(raw[b]); });
        std::array<double, 2> out{folded[order[0]], folded[order[1]]};
        if (out[0] > out[1]) std::swap(out[0], out[1]);
        return out;
    }
};

inline FloquetSpectrum diagonalize_floquet(const FloquetMatrix& m, double omega) {
    if (!(omega > 0.0)) throw validation_error("diagonalize_floquet: omega must be > 0");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.h);
    if (solver.info() != Eigen::Success) {
        throw numerical_error("diagonalize_floquet: eigensolver failed (dimension " +
                              std::to_string(m.h.rows()) + ", Eigen info " +
                              std::to_string(static_cast<int>(solver.info())) + ")");
    }
    FloquetSpectrum s;
    s.n_tr = m.n_tr;
    s.omega = omega;
    s.raw = solver.eigenvalues();
    s.vectors = solver.eigenvectors();
    s.folded.resize(s.raw.size());
    s.labels.resize(static_cast<std::size_t>(s.raw.size()));
    for (Eigen::Index i = 0; i < s.raw.size(); ++i) s.folded[i] = fold_quasienergy(s.raw[i], omega);
    const auto centre = s.central_pair();
    for (Eigen::Index i = 0; i < s.raw.size(); ++i) {
        auto dist = [&](double c) {
            const double d = std::abs(s.folded[i] - c);
            return std::min(d, omega - d);
        };
        auto& lab = s.labels[static_cast<std::size_t>(i)];
        lab.branch = dist(centre[0]) <= dist(centre[1]) ? Branch::minus : Branch::plus;
        lab.brillouin_copy = static_cast<int>(std::lround((s.raw[i] - s.folded[i]) / omega));
    }
    return s;
}

inline FloquetSpectrum solve_floquet(const SystemParams& p, const TruncationConfig& tr) {
    return diagonalize_floquet(build_floquet_matrix(p, tr), p.omega);
}

// Resonant doublet of an m-photon resonance.
//   state_minus: |Phi_{-,0}>, quasienergy e_minus, pair (up,0)/(down,m)
//   e_plus:      partner of state_minus, |Phi_{+,m}>, so omega_numeric = e_plus - e_minus
//   state_plus:  |Phi_{+,0}> (pair (up,-m)/(down,0)), quasienergy e_plus0 = e_plus + m*omega
// Phases: Phi_- ~ -sin(T/2) u_up,0 - s cos(T/2) u_down,m and
//         Phi_+ ~ -cos(T/2) u_up,-m + s sin(T/2) u_down,0, with s = sign(delta_{-m}).
struct Doublet {
    int m{0};
    double e_minus{0.0};
    double e_plus{0.0};
    double e_plus0{0.0};
    double omega_numeric{0.0};
    CompositeState state_minus;
    CompositeState state_plus;
    double score_minus{0.0};
    double score_plus{0.0};
    int n_tr{0};
};

namespace detail {

inline double pair_score(const Eigen::MatrixXd& v, Eigen::Index col, Eigen::Index a, Eigen::Index b) {
    return v(a, col) * v(a, col) + v(b, col) * v(b, col);
}

// Indices of the two eigenvectors with the largest weight on (a, b).
inline std::pair<Eigen::Index, Eigen::Index> top_pair(const FloquetSpectrum& s, Eigen::Index a, Eigen::Index b,
                                                      double ambiguity_tol) {
    Eigen::Index i1 = -1, i2 = -1, i3 = -1;
    double s1 = -1, s2 = -1, s3 = -1;
    for (Eigen::Index c = 0; c < s.vectors.cols(); ++c) {
        const double sc = pair_score(s.vectors, c, a, b);
        if (sc > s1) {
            i3 = i2; s3 = s2; i2 = i1; s2 = s1; i1 = c; s1 = sc;
        } else if (sc > s2) {
            i3 = i2; s3 = s2; i2 = c; s2 = sc;
        } else if (sc > s3) {
            i3 = c; s3 = sc;
        }
    }
    (void)i3;
    if (s2 - s3 < ambiguity_tol) {
        throw numerical_error("central_doublet: ambiguous pair selection (second/third scores " +
                              std::to_string(s2) + " / " + std::to_string(s3) + ")");
    }
    return {i1, i2};
}

inline void fix_sign(CompositeState& st, Spin s1, int n1, double want1, Spin s2, int n2, double want2) {
    const double a = st(s1, n1).real();
    const double b = st(s2, n2).real();
    const double flip = std::abs(a) >= std::abs(b) ? (a * want1 < 0.0 ? -1.0 : 1.0) : (b * want2 < 0.0 ? -1.0 : 1.0);
    if (flip < 0.0) st *= -1.0;
}

}  // namespace detail

inline Doublet central_doublet(const FloquetSpectrum& s, const SystemParams& p, int m,
                               double ambiguity_tol = 1e-6) {
    p.validate();
    if (std::abs(m) + 1 > s.n_tr) throw validation_error("central_doublet: |m| exceeds the ladder");
    auto idx = [&](Spin sp, int n) { return CompositeState::index(sp, n, s.n_tr); };
    const auto [a1, a2] = detail::top_pair(s, idx(Spin::up, 0), idx(Spin::down, m), ambiguity_tol);
    const auto [b1, b2] = detail::top_pair(s, idx(Spin::up, -m), idx(Spin::down, 0), ambiguity_tol);
    const Eigen::Index lo = s.raw[a1] <= s.raw[a2] ? a1 : a2;
    const Eigen::Index hi = lo == a1 ? a2 : a1;
    const Eigen::Index hi0 = s.raw[b1] >= s.raw[b2] ? b1 : b2;

    Doublet d;
    d.m = m;
    d.n_tr = s.n_tr;
    d.e_minus = s.raw[lo];
    d.e_plus = s.raw[hi];
    d.e_plus0 = s.raw[hi0];
    d.omega_numeric = d.e_plus - d.e_minus;
    d.score_minus = detail::pair_score(s.vectors, lo, idx(Spin::up, 0), idx(Spin::down, m));
    d.score_plus = detail::pair_score(s.vectors, hi0, idx(Spin::up, -m), idx(Spin::down, 0));
    d.state_minus = s.state(lo);
    d.state_plus = s.state(hi0);
    const double sg = sign_or_plus(dressed_delta(-m, p));
    detail::fix_sign(d.state_minus, Spin::up, 0, -1.0, Spin::down, m, -sg);
    detail::fix_sign(d.state_plus, Spin::up, -m, -1.0, Spin::down, 0, sg);
    return d;
}

// Doublet with adaptive truncation: start from TruncationConfig::defaults_for
// (or `start`) and double n_tr until e_minus and omega_numeric move by less
// than tol_conv.
struct ConvergedDoublet {
    Doublet doublet;
    int n_tr{0};
    int doublings{0};
    double last_change{0.0};
};

inline ConvergedDoublet converged_doublet(const SystemParams& p, int m,
                                          std::optional<TruncationConfig> start = std::nullopt,
                                          int max_doublings = 4) {
    TruncationConfig tr = start.value_or(TruncationConfig::defaults_for(p));
    tr.n_tr = std::max(tr.n_tr, std::abs(m) + 6);
    Doublet prev = central_doublet(solve_floquet(p, tr), p, m);
    for (int k = 0; k < max_doublings; ++k) {
        TruncationConfig next = tr;
        next.n_tr = 2 * tr.n_tr;
        Doublet cur = central_doublet(solve_floquet(p, next), p, m);
        const double change = std::max(std::abs(cur.e_minus - prev.e_minus),
                                       std::abs(cur.omega_numeric - prev.omega_numeric));
        if (change < tr.tol_conv) return {prev, tr.n_tr, k, change};
        tr = next;
        prev = std::move(cur);
    }
    throw numerical_error("converged_doublet: truncation did not converge after " +
                          std::to_string(max_doublings) + " doublings (n_tr = " + std::to_string(tr.n_tr) + ")");
}

// Follows the doublet across a parameter sweep by eigenvector continuation.
class DoubletTracker {
public:
    explicit DoubletTracker(int m) : m_(m) {}

    Doublet next(const FloquetSpectrum& s, const SystemParams& p) {
        if (!prev_) {
            prev_ = central_doublet(s, p, m_);
            return *prev_;
        }
        Doublet d;
        d.m = m_;
        d.n_tr = s.n_tr;
        const Eigen::Index lo = best_overlap(s, prev_->state_minus);
        const Eigen::Index hi0 = best_overlap(s, prev_->state_plus);
        // Partner of lo: the other member of the (up,0)/(down,m) pair.
        auto idx = [&](Spin sp, int n) { return CompositeState::index(sp, n, s.n_tr); };
        Eigen::Index partner = -1;
        double best = -1.0;
        for (Eigen::Index c = 0; c < s.vectors.cols(); ++c) {
            if (c == lo) continue;
            const double sc = detail::pair_score(s.vectors, c, idx(Spin::up, 0), idx(Spin::down, m_));
            if (sc > best) {
                best = sc;
                partner = c;
            }
        }
        d.e_minus = s.raw[lo];
        d.e_plus = s.raw[partner];
        d.e_plus0 = s.raw[hi0];
        d.omega_numeric = d.e_plus - d.e_minus;
        d.score_minus = std::norm(s.state(lo).inner(prev_->state_minus));
        d.score_plus = std::norm(s.state(hi0).inner(prev_->state_plus));
        d.state_minus = s.state(lo);
        d.state_plus = s.state(hi0);
        // Continue the phase of the previous point.
        if (d.state_minus.inner(prev_->state_minus).real() < 0.0) d.state_minus *= -1.0;
        if (d.state_plus.inner(prev_->state_plus).real() < 0.0) d.state_plus *= -1.0;
        prev_ = d;
        return d;
    }

    void reset() { prev_.reset(); }

private:
    static Eigen::Index best_overlap(const FloquetSpectrum& s, const CompositeState& ref) {
        Eigen::Index best = 0;
        double bv = -1.0;
        for (Eigen::Index c = 0; c < s.vectors.cols(); ++c) {
            const double v = std::norm(s.state(c).inner(ref));
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        return best;
    }

    int m_;
    std::optional<Doublet> prev_;
};

// X^{(n)}_{ab} = <<Phi_{a,0}| sz/2 |Phi_{b,n}>>, with |Phi_{b,n}> the
// ladder copy of b shifted by n photons.
inline cplx numeric_position_coeffs(const CompositeState& a, const CompositeState& b, int n,
                                    Diagnostics* diag = nullptr, double tol = 1e-10) {
    const int w = std::min(a.n_tr(), b.n_tr());
    cplx acc{0.0, 0.0};
    double kept = 0.0;
    for (int k = -w; k <= w; ++k) {
        for (Spin s : {Spin::up, Spin::down}) {
            const cplx bv = b(s, k - n);
            kept += std::norm(bv);
            acc += std::conj(a(s, k)) * position_value(s) * bv;
        }
    }
    if (diag != nullptr) {
        const double lost = b.norm() * b.norm() - kept;
        if (lost > tol) {
            diag->warn("numeric_position_coeffs: shift " + std::to_string(n) + " loses " + std::to_string(lost) +
                       " of norm at the ladder edge");
        }
    }
    return acc;
}

// Which calculation produced a set of modes or a trajectory.
enum class SolutionTier { rwa, vv1, vv2, vv2_averaged, numeric };

inline const char* to_string(SolutionTier t) noexcept {
    switch (t) {
        case SolutionTier::rwa: return "rwa";
        case SolutionTier::vv1: return "vv1";
        case SolutionTier::vv2: return "vv2";
        case SolutionTier::vv2_averaged: return "vv2_averaged";
        case SolutionTier::numeric: return "numeric";
    }
    return "?";
}

// The two Floquet modes |Phi_{-,0}>, |Phi_{+,0}> with their (unfolded)
// quasienergies, enough to assemble any observable of the driven TLS.
struct ModePair {
    CompositeState minus;
    CompositeState plus;
    double e_minus{0.0};
    double e_plus{0.0};
    SystemParams p;
    SolutionTier tier{SolutionTier::numeric};

    // e_+ - e_- = m omega + Omega for a resonant doublet.
    double splitting() const noexcept { return e_plus - e_minus; }

    // Columns (minus, plus), rows (up, down) of <spin|Phi_alpha(t)>.
    // The pair is Loewdin-orthonormalized: perturbative modes are only
    // orthonormal to the order they were built at.
    Eigen::Matrix2cd spinors(double t) const {
        Eigen::Matrix2cd m;
        m(0, 0) = minus.spin_amplitude(Spin::up, t, p);
        m(1, 0) = minus.spin_amplitude(Spin::down, t, p);
        m(0, 1) = plus.spin_amplitude(Spin::up, t, p);
        m(1, 1) = plus.spin_amplitude(Spin::down, t, p);
        const Eigen::Matrix2cd gram = m.adjoint() * m;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(gram);
        if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 1e-12) {
            throw numerical_error("ModePair: instantaneous modes are linearly dependent");
        }
        return m * es.operatorInverseSqrt();
    }

    // rho_{ab}(0) = <Phi_a(0)|psi><psi|Phi_b(0)> for a localized spin state.
    Eigen::Matrix2cd initial_density(Spin s = Spin::down) const {
        const Eigen::Matrix2cd u = spinors(0.0);
        const int r = static_cast<int>(s);
        Eigen::Matrix2cd rho;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) rho(a, b) = std::conj(u(r, a)) * u(r, b);
        return rho;
    }

    ModePair trimmed(double tol = 1e-15) const {
        ModePair out = *this;
        out.minus = minus.trimmed(tol);
        out.plus = plus.trimmed(tol);
        return out;
    }
};

inline ModePair numeric_modes(const Doublet& d, const SystemParams& p) {
    return ModePair{d.state_minus, d.state_plus, d.e_minus, d.e_plus0, p, SolutionTier::numeric};
}

}  // namespace dtls
