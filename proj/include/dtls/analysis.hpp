// analysis.hpp: observables and derived data: survival probabilities from
// density trajectories, Fourier spectra with peak classification, RWA / Van
// Vleck / exact deviation maps and the CDT / DITO scenario runners.

#pragma once

#include "dtls/bath.hpp"
#include "dtls/core.hpp"
#include "dtls/floquet.hpp"
#include "dtls/vanvleck.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace dtls {

// ---------------------------------------------------------------- threads

// DTLS_THREADS overrides the hardware concurrency.
inline unsigned default_thread_count() {
    if (const char* env = std::getenv("DTLS_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n); workers pull indices from a shared counter.
// The first exception thrown by any task is rethrown on the caller.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0) {
    if (threads == 0) threads = default_thread_count();
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lk(err_mu);
                if (!err) err = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// ------------------------------------------------------------- trajectories

struct Trajectory {
    std::vector<double> times;
    std::vector<double> values;
    SystemParams params;
    std::string tier;

    void validate() const {
        if (times.size() != values.size()) throw validation_error("Trajectory: size mismatch");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1])) throw validation_error("Trajectory: times must increase");
    }

    double min() const { return *std::min_element(values.begin(), values.end()); }
    double max() const { return *std::max_element(values.begin(), values.end()); }
};

inline std::vector<double> uniform_grid(double t_max, std::size_t n_points) {
    if (n_points < 2 || !(t_max > 0.0)) throw validation_error("uniform_grid: need t_max > 0 and >= 2 points");
    std::vector<double> t(n_points);
    for (std::size_t i = 0; i < n_points; ++i) t[i] = t_max * static_cast<double>(i) / static_cast<double>(n_points - 1);
    return t;
}

// P(t) = 2 Re{<g|Phi_-><Phi_+|g> rho_-+} + |<g|Phi_+>|^2 + (|<g|Phi_->|^2 - |<g|Phi_+>|^2) rho_--
inline Trajectory survival_from_density(const DensityTrajectory& rho, const ModePair& modes, Spin target = Spin::down) {
    const bool numeric_modes_ = modes.tier == SolutionTier::numeric;
    if ((rho.source == DensitySource::numeric_fbr) != numeric_modes_ || rho.tier != modes.tier) {
        throw validation_error(std::string("survival_from_density: tier mismatch (density from ") +
                               (rho.source == DensitySource::numeric_fbr ? "numeric_fbr" : "analytic_mrwa") + "/" +
                               to_string(rho.tier) + ", modes " + to_string(modes.tier) + ")");
    }
    Trajectory out;
    out.times = rho.times;
    out.params = modes.p;
    out.tier = to_string(modes.tier);
    out.values.reserve(rho.times.size());
    const int r = static_cast<int>(target);
    for (std::size_t i = 0; i < rho.times.size(); ++i) {
        const Eigen::Matrix2cd u = modes.spinors(rho.times[i]);
        const cplx am = u(r, 0), ap = u(r, 1);
        out.values.push_back(2.0 * (am * std::conj(ap) * rho.rho_mp[i]).real() + std::norm(ap) +
                             (std::norm(am) - std::norm(ap)) * rho.rho_mm[i]);
    }
    return out;
}

// Closed-system survival of |down> from a mode pair (exact for numeric modes).
inline Trajectory closed_survival(const ModePair& modes, const std::vector<double>& times) {
    const Eigen::Matrix2cd rho0 = modes.initial_density(Spin::down);
    Trajectory out;
    out.times = times;
    out.params = modes.p;
    out.tier = to_string(modes.tier);
    out.values.reserve(times.size());
    for (double t : times) out.values.push_back(survival_from_modes(modes, rho0, t));
    return out;
}

// ----------------------------------------------------------------- spectra

enum class WindowKind { none, hann };
enum class PeakClass { relaxation, dressed, harmonic, sideband, unclassified };

inline const char* to_string(PeakClass c) noexcept {
    switch (c) {
        case PeakClass::relaxation: return "relaxation";
        case PeakClass::dressed: return "dressed";
        case PeakClass::harmonic: return "harmonic";
        case PeakClass::sideband: return "sideband";
        case PeakClass::unclassified: return "unclassified";
    }
    return "?";
}

struct Peak {
    double nu{0.0};
    double height{0.0};
    double width{0.0};  // full width at half maximum
    PeakClass cls{PeakClass::unclassified};
    int harmonic{0};    // n for harmonic / sideband
};

struct HarmonicLine {
    int n{0};
    cplx coefficient;  // P_asym(t) ~ sum_n c_n e^{i n omega t}
};

struct SpectrumOptions {
    WindowKind window{WindowKind::hann};
    bool subtract_asymptote{false};
    double threshold{0.01};        // relative to the global maximum
    int asymptote_harmonics{8};
    int zero_pad{8};
    double omega{1.0};             // drive frequency
    double dressed{0.0};           // reference Omega for classification
    double class_tol{-1.0};        // -1: omega / 50
};

struct SpectrumEstimate {
    std::vector<double> frequencies;
    std::vector<double> magnitudes;
    std::vector<Peak> peaks;
    std::vector<HarmonicLine> harmonic_lines;
    double resolution{0.0};  // native 2 pi / T

    std::size_t count_above(double frac) const {
        double mx = 0.0;
        for (const auto& p : peaks) mx = std::max(mx, p.height);
        return static_cast<std::size_t>(
            std::count_if(peaks.begin(), peaks.end(), [&](const Peak& p) { return p.height >= frac * mx; }));
    }
};

inline PeakClass classify_peak(double nu, double omega, double dressed, double tol, int* harmonic = nullptr) {
    if (std::abs(nu) < tol) return PeakClass::relaxation;
    if (dressed > 0.0 && std::abs(nu - dressed) < tol) return PeakClass::dressed;
    const int n = static_cast<int>(std::lround(nu / omega));
    if (n >= 1 && std::abs(nu - n * omega) < tol) {
        if (harmonic) *harmonic = n;
        return PeakClass::harmonic;
    }
    if (dressed > 0.0) {
        for (int k : {static_cast<int>(std::lround((nu - dressed) / omega)), static_cast<int>(std::lround((nu + dressed) / omega))}) {
            if (k < 1) continue;
            if (std::abs(nu - (k * omega + dressed)) < tol || std::abs(nu - (k * omega - dressed)) < tol) {
                if (harmonic) *harmonic = k;
                return PeakClass::sideband;
            }
        }
    }
    return PeakClass::unclassified;
}

// |F(nu)| of a uniformly sampled record, normalized so that cos(W t) over a
// record of length T peaks at T/2 for either window.
inline SpectrumEstimate fourier_spectrum(const Trajectory& traj, const SpectrumOptions& opt) {
    traj.validate();
    const std::size_t n = traj.times.size();
    if (n < 16) throw validation_error("fourier_spectrum: record too short");
    if (!(opt.omega > 0.0)) throw validation_error("fourier_spectrum: omega must be > 0");
    const double dt = traj.times[1] - traj.times[0];
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(traj.times[i] - traj.times[i - 1] - dt) > 1e-6 * dt)
            throw validation_error("fourier_spectrum: times must be uniform");
    const double T = dt * static_cast<double>(n);
    if (T < 20.0 * 2.0 * pi / opt.omega) throw validation_error("fourier_spectrum: record shorter than 20 drive periods");
    const double res = 2.0 * pi / T;
    if (opt.dressed > 0.0 && res > opt.dressed / 10.0)
        throw validation_error("fourier_spectrum: resolution " + std::to_string(res) + " coarser than Omega/10");

    SpectrumEstimate est;
    est.resolution = res;
    std::vector<double> f(traj.values);

    if (opt.subtract_asymptote) {
        // Least-squares trig polynomial in n omega over the last quarter.
        const std::size_t start = n - n / 4;
        const int K = opt.asymptote_harmonics;
        Eigen::MatrixXd A(static_cast<Eigen::Index>(n - start), 2 * K + 1);
        Eigen::VectorXd y(static_cast<Eigen::Index>(n - start));
        for (std::size_t i = start; i < n; ++i) {
            const auto r = static_cast<Eigen::Index>(i - start);
            const double t = traj.times[i];
            A(r, 0) = 1.0;
            for (int k = 1; k <= K; ++k) {
                A(r, 2 * k - 1) = std::cos(k * opt.omega * t);
                A(r, 2 * k) = std::sin(k * opt.omega * t);
            }
            y(r) = f[i];
        }
        const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
        est.harmonic_lines.push_back({0, cplx(c(0), 0.0)});
        for (int k = 1; k <= K; ++k) est.harmonic_lines.push_back({k, 0.5 * cplx(c(2 * k - 1), -c(2 * k))});
        for (std::size_t i = 0; i < n; ++i) {
            const double t = traj.times[i];
            double v = c(0);
            for (int k = 1; k <= K; ++k) v += c(2 * k - 1) * std::cos(k * opt.omega * t) + c(2 * k) * std::sin(k * opt.omega * t);
            f[i] -= v;
        }
    } else {
        double mean = 0.0;
        for (double v : f) mean += v;
        mean /= static_cast<double>(n);
        for (double& v : f) v -= mean;
    }

    double wsum = 0.0;
    if (opt.window == WindowKind::hann) {
        for (std::size_t i = 0; i < n; ++i) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n - 1));
            f[i] *= w;
            wsum += w;
        }
    } else {
        wsum = static_cast<double>(n);
    }
    const double gain = wsum / static_cast<double>(n);

    std::size_t nfft = 1;
    while (nfft < n * static_cast<std::size_t>(std::max(1, opt.zero_pad))) nfft <<= 1;
    f.resize(nfft, 0.0);
    Eigen::FFT<double> fft;
    std::vector<cplx> spec;
    fft.fwd(spec, f);
    const std::size_t half = nfft / 2;
    const double dnu = 2.0 * pi / (dt * static_cast<double>(nfft));
    est.frequencies.resize(half + 1);
    est.magnitudes.resize(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        est.frequencies[k] = dnu * static_cast<double>(k);
        est.magnitudes[k] = std::abs(spec[k]) * dt / gain;
    }

    // Peaks: local maxima dominating +-3 native bins, above threshold.
    const double gmax = *std::max_element(est.magnitudes.begin(), est.magnitudes.end());
    const auto guard = static_cast<std::ptrdiff_t>(std::ceil(3.0 * res / dnu));
    const double tol = opt.class_tol > 0.0 ? opt.class_tol : opt.omega / 50.0;
    const auto& mag = est.magnitudes;
    for (std::size_t k = 0; k <= half; ++k) {
        if (mag[k] < opt.threshold * gmax) continue;
        bool top = true;
        for (std::ptrdiff_t j = -guard; j <= guard && top; ++j) {
            const auto q = static_cast<std::ptrdiff_t>(k) + j;
            if (j == 0 || q < 0 || q > static_cast<std::ptrdiff_t>(half)) continue;
            if (mag[static_cast<std::size_t>(q)] > mag[k] || (mag[static_cast<std::size_t>(q)] == mag[k] && j < 0)) top = false;
        }
        if (!top) continue;
        Peak pk;
        pk.nu = est.frequencies[k];
        pk.height = mag[k];
        if (k > 0 && k < half) {
            const double a = mag[k - 1], b = mag[k], c = mag[k + 1];
            const double den = a - 2.0 * b + c;
            if (den < 0.0) {
                const double off = 0.5 * (a - c) / den;
                pk.nu += off * dnu;
                pk.height = b - 0.25 * (a - c) * off;
            }
        }
        std::size_t lo = k, hi = k;
        while (lo > 0 && mag[lo] > 0.5 * mag[k]) --lo;
        while (hi < half && mag[hi] > 0.5 * mag[k]) ++hi;
        pk.width = est.frequencies[hi] - est.frequencies[lo];
        pk.cls = classify_peak(pk.nu, opt.omega, opt.dressed, tol, &pk.harmonic);
        est.peaks.push_back(pk);
    }
    return est;
}

// ------------------------------------------------------------ deviation maps

enum class DeviationReference { vv2, numeric };

struct DeviationMap {
    std::vector<double> omegas;
    std::vector<double> amps;
    double epsilon{0.0};
    DeviationReference reference{DeviationReference::vv2};
    std::vector<double> values;     // row-major [i_omega * n_amp + i_amp]
    std::vector<char> singular;     // reference frequency below 1e-9 delta
    std::vector<char> failed;       // numerical failure in the cell
    std::vector<int> m;             // resonance order used per cell
    double clip{0.15};

    std::size_t index(std::size_t io, std::size_t ia) const { return io * amps.size() + ia; }
    double clipped(std::size_t io, std::size_t ia) const { return std::min(values[index(io, ia)], clip); }
};

struct DeviationCell {
    double value{0.0};
    bool singular{false};
    int m{0};
};

// rwa-vs-vv2: |Omega_rwa - Omega_2| / Omega_2.
// numeric:    |Omega_2 - Omega_num| / Omega_num (exact gap as higher-order reference).
// `drop_second_order` forces S = 0 (then the vv2 map is identically zero).
inline DeviationCell deviation_cell(const SystemParams& p, DeviationReference ref, int n_tr_fixed = -1,
                                    bool drop_second_order = false) {
    DeviationCell cell;
    cell.m = nearest_resonance(p);
    const ResonanceContext c(p, cell.m);
    const double s = drop_second_order ? 0.0 : second_order_sum(c);
    const double o2 = vv2_frequency(c, s);
    const double thr = 1e-9 * p.delta;
    if (ref == DeviationReference::vv2) {
        if (o2 < thr) {
            cell.singular = true;
            return cell;
        }
        cell.value = std::abs(rwa_frequency(c) - o2) / o2;
        return cell;
    }
    TruncationConfig tr = TruncationConfig::defaults_for(p);
    if (n_tr_fixed > 0) tr.n_tr = std::max(n_tr_fixed, std::abs(cell.m) + 6);
    const Doublet d = central_doublet(solve_floquet(p, tr), p, cell.m);
    if (d.omega_numeric < thr) {
        cell.singular = true;
        return cell;
    }
    cell.value = std::abs(o2 - d.omega_numeric) / d.omega_numeric;
    return cell;
}

inline DeviationMap deviation_map(const std::vector<double>& omegas, const std::vector<double>& amps, double eps,
                                  DeviationReference ref, SystemParams base = {}, unsigned threads = 0,
                                  std::function<int(const SystemParams&)> truncation = {}) {
    if (omegas.empty() || amps.empty()) throw validation_error("deviation_map: empty grid");
    DeviationMap dm;
    dm.omegas = omegas;
    dm.amps = amps;
    dm.epsilon = eps;
    dm.reference = ref;
    const std::size_t ncell = omegas.size() * amps.size();
    dm.values.assign(ncell, 0.0);
    dm.singular.assign(ncell, 0);
    dm.failed.assign(ncell, 0);
    dm.m.assign(ncell, 0);
    parallel_for(
        ncell,
        [&](std::size_t k) {
            SystemParams p = base;
            p.omega = omegas[k / amps.size()];
            p.amp = amps[k % amps.size()];
            p.epsilon = eps;
            try {
                const DeviationCell c = deviation_cell(p, ref, truncation ? truncation(p) : -1);
                dm.values[k] = c.value;
                dm.singular[k] = c.singular ? 1 : 0;
                dm.m[k] = c.m;
            } catch (const numerical_error&) {
                dm.failed[k] = 1;
                dm.values[k] = std::nan("");
            }
        },
        threads);
    return dm;
}

// --------------------------------------------------------------- scenarios

enum class ScenarioKind { cdt, dito };

struct ScenarioConfig {
    int m{3};
    double omega{2.0};
    double delta{1.0};
    double amp{3.0};             // dito only; cdt derives A from a Bessel zero
    int zero_index{1};           // cdt: which positive zero of J_m
    double kappa{0.0};
    double beta{10.0};
    double t_max{200.0};
    std::size_t n_points{8001};
    double detuned_omega{1.9};   // dito comparison run
    bool numeric{true};
};

struct ScenarioReport {
    ScenarioKind kind{ScenarioKind::cdt};
    SystemParams params;
    BathParams bath;
    std::map<std::string, Trajectory> trajectories;
    std::map<std::string, double> numbers;
    Diagnostics diagnostics;
};

// k-th positive zero of J_m (m != 0 searched above m, coarse scan + bisection).
inline double bessel_zero(int m, int k = 1) {
    if (k < 1) throw validation_error("bessel_zero: k must be >= 1");
    const int am = std::abs(m);
    double a = am == 0 ? 0.5 : static_cast<double>(am);
    double fa = bessel_j(am, a);
    int found = 0;
    for (double b = a + 0.05; b < 400.0; b += 0.05) {
        const double fb = bessel_j(am, b);
        if ((fa < 0.0) != (fb < 0.0)) {
            if (++found == k) {
                double lo = b - 0.05, hi = b, flo = fa;
                for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double fm = bessel_j(am, mid);
                    if ((fm < 0.0) == (flo < 0.0)) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
        }
        fa = fb;
    }
    throw numerical_error("bessel_zero: zero not found");
}

namespace detail {

inline void add_tier_set(ScenarioReport& rep, const std::string& suffix, const SystemParams& p, int m,
                         const BathParams& bath, const std::vector<double>& times, bool numeric) {
    const ResonanceContext c(p, m);
    if (bath.kappa == 0.0) {
        Trajectory r;
        r.times = times;
        r.params = p;
        r.tier = "rwa";
        r.values = survival_nondissipative(c, SurvivalTier::rwa, times);
        rep.trajectories["rwa" + suffix] = r;
        Trajectory v = r;
        v.tier = "vv2";
        v.values = survival_nondissipative(c, SurvivalTier::vv2, times);
        rep.trajectories["vv2" + suffix] = v;
        if (numeric) {
            const auto cd = converged_doublet(p, m);
            rep.trajectories["numeric" + suffix] = closed_survival(numeric_modes(cd.doublet, p), times);
            rep.numbers["omega_numeric" + suffix] = cd.doublet.omega_numeric;
        }
    } else {
        for (XOrder o : {XOrder::rwa, XOrder::vv2}) {
            const auto ad = analytic_density_evolution(c, bath, o, times, std::nullopt, &rep.diagnostics);
            const std::string name = o == XOrder::rwa ? "rwa" : "vv2";
            rep.trajectories[name + suffix] = survival_from_density(ad.rho, ad.modes);
            rep.numbers["gamma_rel_" + name + suffix] = gamma_rel_of(ad.L);
            rep.numbers["gamma_deph_" + name + suffix] = gamma_deph_of(ad.L);
        }
        if (numeric) {
            const auto cd = converged_doublet(p, m);
            const ModePair modes = numeric_modes(cd.doublet, p).trimmed(1e-16);
            const auto rho = numeric_fbr_solve(modes, bath, modes.initial_density(Spin::down), times, {}, &rep.diagnostics);
            rep.trajectories["numeric" + suffix] = survival_from_density(rho, modes);
            rep.numbers["omega_numeric" + suffix] = cd.doublet.omega_numeric;
        }
    }
    rep.numbers["omega_rwa" + suffix] = rwa_frequency(c);
    rep.numbers["omega_vv2" + suffix] = vv2_frequency(c);
    rep.numbers["theta_rwa" + suffix] = mixing_angle(c, AngleOrder::rwa);
    rep.numbers["theta_vv2" + suffix] = mixing_angle(c, AngleOrder::vv2);
}

}  // namespace detail

inline ScenarioReport run_scenario(ScenarioKind kind, const ScenarioConfig& cfg) {
    if (cfg.m == 0) throw validation_error("run_scenario: m must be nonzero");
    ScenarioReport rep;
    rep.kind = kind;
    rep.bath = BathParams{cfg.kappa, cfg.beta};
    rep.bath.validate();
    SystemParams p{cfg.delta, 0.0, cfg.amp, cfg.omega};
    if (kind == ScenarioKind::cdt) {
        p.amp = cfg.omega * bessel_zero(cfg.m, cfg.zero_index);
        p.epsilon = cfg.m * cfg.omega;
    } else {
        p.epsilon = resonance_bias(cfg.m, p);
    }
    p.validate();
    rep.params = p;
    rep.numbers["epsilon"] = p.epsilon;
    rep.numbers["amp"] = p.amp;
    const auto times = uniform_grid(cfg.t_max, cfg.n_points);
    detail::add_tier_set(rep, "", p, cfg.m, rep.bath, times, cfg.numeric);
    if (kind == ScenarioKind::dito && cfg.detuned_omega > 0.0) {
        SystemParams q = p;
        q.omega = cfg.detuned_omega;
        detail::add_tier_set(rep, "_detuned", q, cfg.m, rep.bath, times, false);
    }
    for (const auto& [name, tr] : rep.trajectories) {
        rep.numbers["min_" + name] = tr.min();
        rep.numbers["max_" + name] = tr.max();
    }
    return rep;
}

}  // namespace dtls
