#include "dtls/analysis.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

using namespace dtls;

namespace {

const BathParams bath{0.01, 10.0};

// exp(x) by Taylor summation in long double, then coth.
long double coth_oracle(long double x) {
    long double term = 1.0L, e = 1.0L;
    for (int k = 1; k < 200; ++k) {
        term *= 2.0L * x / k;
        e += term;
    }
    return (e + 1.0L) / (e - 1.0L);
}

ModePair numeric_pair(const SystemParams& p, int m) {
    return numeric_modes(converged_doublet(p, m).doublet, p).trimmed(1e-16);
}

std::vector<double> zeros_of_j2(double omega, double amax) {
    std::vector<double> out;
    for (double a = 0.5; a < amax; a += 0.01) {
        double lo = a, hi = a + 0.01;
        if ((bessel_j(2, lo / omega) < 0.0) == (bessel_j(2, hi / omega) < 0.0)) continue;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (bessel_j(2, lo / omega) < 0.0) == (bessel_j(2, mid / omega) < 0.0) ? lo = mid : hi = mid;
        }
        out.push_back(0.5 * (lo + hi));
    }
    return out;
}

}  // namespace

TEST(BathN, ZeroFrequencyLimit) {
    EXPECT_DOUBLE_EQ(bath_N(0.0, bath), 0.001);
    EXPECT_NEAR(bath_N(1e-9, bath), 0.001, 1e-11);
    EXPECT_NEAR(bath_N(-1e-9, bath), 0.001, 1e-11);
}

TEST(BathN, NegativeFrequencyIdentity) {
    for (double nu : {0.01, 0.25, 1.0, 3.7, 20.0}) EXPECT_NEAR(bath_N(-nu, bath), bath_N(nu, bath) + 0.01 * nu, 1e-15);
}

TEST(BathN, ExtendedPrecisionCoth) {
    const double nu = 0.25;
    const long double ref = 0.01L * nu * 0.5L * (coth_oracle(10.0L * nu / 2.0L) - 1.0L);
    EXPECT_NEAR(bath_N(nu, bath), static_cast<double>(ref), 1e-16);
    EXPECT_NEAR(bath_G_coth(nu, bath), static_cast<double>(0.01L * nu * coth_oracle(1.25L)), 1e-16);
}

TEST(BathN, LargeFrequencyDecay) {
    EXPECT_NEAR(bath_N(5.0, bath) / (0.05 * std::exp(-50.0)), 1.0, 1e-12);
    EXPECT_THROW(bath_N(1.0, BathParams{0.01, 0.0}), validation_error);
    EXPECT_THROW(bath_N(1.0, BathParams{-0.01, 1.0}), validation_error);
}

TEST(PositionCoeffsAnalytic, UndrivenLimit) {
    const ResonanceContext c({1.0, 4.0, 1e-8, 2.0}, 2);
    for (int n = -4; n <= 4; ++n) {
        if (n == 0) continue;
        for (Branch a : {Branch::minus, Branch::plus})
            for (Branch b : {Branch::minus, Branch::plus})
                EXPECT_LT(std::abs(analytic_position_coeffs(c, a, b, n, XOrder::vv2)), 1e-7) << n;
    }
}

TEST(PositionCoeffsAnalytic, FirstOrderFormsDoNotVanishUndriven) {
    const ResonanceContext c({1.0, 4.0, 1e-8, 2.0}, 2);
    double mx = 0.0;
    for (int n : {-2, 2, 4}) mx = std::max(mx, std::abs(analytic_position_coeffs(c, Branch::minus, Branch::plus, n, XOrder::vv1)));
    EXPECT_GT(mx, 0.05);
}

TEST(PositionCoeffsAnalytic, RwaSelectionRules) {
    const ResonanceContext c({1.0, 4.1, 3.0, 2.0}, 2);
    const double th = mixing_angle(c, AngleOrder::rwa);
    for (int n = -6; n <= 6; ++n) {
        const cplx mp = analytic_position_coeffs(c, Branch::minus, Branch::plus, n, XOrder::rwa);
        const cplx mm = analytic_position_coeffs(c, Branch::minus, Branch::minus, n, XOrder::rwa);
        if (n == 2) EXPECT_NEAR(mp.real(), 0.5 * std::sin(th), 1e-14);
        else EXPECT_EQ(mp, cplx{});
        if (n == 0) EXPECT_NEAR(std::abs(mm), 0.5 * std::abs(std::cos(th)), 1e-14);
        else EXPECT_EQ(mm, cplx{});
    }
}

TEST(PositionCoeffsAnalytic, Symmetries) {
    const ResonanceContext c({1.0, 4.1, 5.0, 2.0}, 2);
    for (XOrder o : {XOrder::rwa, XOrder::vv1, XOrder::vv2}) {
        const XTable X = analytic_xtable(c, o, 8);
        for (int n = -8; n <= 8; ++n) {
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) EXPECT_LT(std::abs(X(a, b, -n) - std::conj(X(b, a, n))), 1e-12);
            EXPECT_LT(std::abs(X(1, 1, n) + X(0, 0, n)), 1e-12);
        }
    }
}

// Phase-invariant agreement holds on the whole sweep. The signed values agree
// everywhere except a narrow band just below the zero of the dressed coupling,
// where the full effective coupling has already changed sign while the closed
// form still takes its sign from the bare one.
TEST(PositionCoeffsAnalytic, MatchNumericAcrossAmplitudeSweep) {
    double worst_abs = 0.0, worst_signed = 0.0, band_lo = 1e9, band_hi = -1e9;
    for (double a = 0.0; a <= 12.0; a += 0.01) {
        const SystemParams p{1.0, 4.0, a, 2.0};
        const ResonanceContext c(p, 2);
        const ModePair modes = numeric_pair(p, 2);
        double w = 0.0;
        for (int n : {-2, 0, 2, 4}) {
            const cplx nmm = numeric_position_coeffs(modes.minus, modes.minus, n);
            const cplx nmp = numeric_position_coeffs(modes.minus, modes.plus, n);
            const cplx amm = analytic_position_coeffs(c, Branch::minus, Branch::minus, n, XOrder::vv2);
            const cplx amp = analytic_position_coeffs(c, Branch::minus, Branch::plus, n, XOrder::vv2);
            worst_abs = std::max({worst_abs, std::abs(std::abs(nmm) - std::abs(amm)), std::abs(std::abs(nmp) - std::abs(amp))});
            w = std::max({w, std::abs(nmm - amm), std::abs(nmp - amp)});
        }
        if (w > 0.02) band_lo = std::min(band_lo, a), band_hi = std::max(band_hi, a);
        else worst_signed = std::max(worst_signed, w);
    }
    EXPECT_LT(worst_abs, 0.02);
    EXPECT_LT(worst_signed, 0.02);
    const double zero = 2.0 * 5.135622301840683;  // first zero of J2, times omega
    EXPECT_LE(band_hi, zero);
    EXPECT_LT(band_hi - band_lo, 0.15);
}

TEST(Mrwa, ZeroCouplingGivesZeroTensor) {
    const ResonanceContext c({1.0, 4.1, 3.0, 2.0}, 2);
    const ModePair modes = vv_eigenstates(c, StateOrder::order2);
    const auto L = mrwa_coefficients(analytic_xtable(c, XOrder::vv2, 14), energies_of(modes), {0.0, 10.0}, c.params());
    EXPECT_EQ(L.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mrwa, SymmetriesOnAmplitudeSweep) {
    for (double a = 0.0; a <= 20.0; a += 0.5) {
        const SystemParams p{1.0, 4.1, a, 2.0};
        const ResonanceContext c(p, 2);
        const ModePair modes = vv_eigenstates(c, StateOrder::order2);
        const auto L = mrwa_coefficients(analytic_xtable(c, XOrder::vv2, default_harmonic_cutoff(p)), energies_of(modes),
                                         bath, p);
        EXPECT_LT(mrwa_symmetry_residual(L), 1e-12) << a;
    }
}

TEST(Mrwa, TailWarning) {
    const SystemParams p{1.0, 4.1, 12.0, 2.0};
    const ResonanceContext c(p, 2);
    const ModePair modes = vv_eigenstates(c, StateOrder::order2);
    Diagnostics d;
    mrwa_coefficients(analytic_xtable(c, XOrder::vv2, 2), energies_of(modes), bath, p, &d);
    EXPECT_FALSE(d.warnings.empty());
}

TEST(Mrwa, StationaryPopulationAgainstLongTimeAverage) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    const auto ad = analytic_density_evolution(c, bath, XOrder::vv2, {0.0});
    const double stat = stationary_population(ad.L);
    EXPECT_GE(stat, 0.0);
    EXPECT_LE(stat, 1.0);
    const ModePair modes = numeric_pair(p, 2);
    const double t0 = 5.0 / gamma_rel_of(ad.L);
    std::vector<double> times{0.0};
    for (double t = t0; t < t0 + 20.0 * p.period(); t += 0.01) times.push_back(t);
    const auto fbr = numeric_fbr_solve(modes, bath, modes.initial_density(), times);
    double avg = 0.0;
    for (std::size_t i = 1; i < fbr.rho_mm.size(); ++i) avg += fbr.rho_mm[i];
    avg /= static_cast<double>(fbr.rho_mm.size() - 1);
    EXPECT_NEAR(avg, stat, bath.kappa);
}

TEST(Rates, ClosedFormMatchesTensorRoute) {
    for (double a : {1.0, 3.0, 6.0, 11.0}) {
        const SystemParams p{1.0, 4.1, a, 2.0};
        const ResonanceContext c(p, 2);
        const RateSet r = rates(c, bath, RateMethod::vv2);
        const ModePair modes = vv_eigenstates(c, StateOrder::order2);
        const XTable X = analytic_xtable(c, XOrder::vv2, default_harmonic_cutoff(p));
        const auto L = mrwa_coefficients(X, energies_of(modes), bath, p);
        const auto [gr, gd] = rates_from_x(X, energies_of(modes), bath, p);
        EXPECT_NEAR(gamma_rel_of(L), gr, 1e-12);
        EXPECT_NEAR(gamma_deph_of(L), gd, 1e-12);
        EXPECT_NEAR(r.gamma_rel / gr, 1.0, 0.02) << a;
        EXPECT_NEAR(r.gamma_deph / gd, 1.0, 0.02) << a;
    }
}

TEST(Rates, RwaReducesToTensorWithRwaCoefficients) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    const RateSet r = rates(c, bath, RateMethod::rwa);
    const ModePair modes = rwa_modes(c);
    const auto L = mrwa_coefficients(analytic_xtable(c, XOrder::rwa, 10), energies_of(modes), bath, p);
    EXPECT_NEAR(r.gamma_rel, gamma_rel_of(L), 1e-12);
    EXPECT_NEAR(r.gamma_deph, gamma_deph_of(L), 1e-12);
}

TEST(Rates, InvariantsOnAmplitudeSweep) {
    for (double a = 0.0; a <= 20.0; a += 0.05) {
        const ResonanceContext c({1.0, 4.1, a, 2.0}, 2);
        for (RateMethod m : {RateMethod::rwa, RateMethod::vv2}) {
            const RateSet r = rates(c, bath, m);
            double sr = 0.0, sd = 0.0;
            for (const auto& [n, v] : r.per_harmonic) sr += v.first, sd += v.second;
            EXPECT_NEAR(sr, r.gamma_rel, 1e-15);
            EXPECT_NEAR(sd, r.gamma_deph, 1e-15);
            EXPECT_GE(r.gamma_deph - 0.5 * r.gamma_rel, -1e-12);
            if (m == RateMethod::vv2) {
                EXPECT_GT(r.gamma_rel, 0.0) << a;
                EXPECT_GT(r.gamma_deph, 0.0) << a;
            }
        }
    }
}

// The n = 0 relaxation channel closes at each zero of the dressed coupling, so
// gamma_rel dips there; the dip minimum is pulled off the zero by the other
// harmonics. The dephasing peak is only present at the larger amplitude.
TEST(Rates, BehaviourAtCouplingZeros) {
    const auto zs = zeros_of_j2(2.0, 20.0);
    ASSERT_EQ(zs.size(), 2u);
    for (double z : zs) {
        const ResonanceContext c({1.0, 4.1, z, 2.0}, 2);
        const RateSet rw = rates(c, bath, RateMethod::rwa);
        const RateSet vv = rates(c, bath, RateMethod::vv2);
        EXPECT_LT(rw.gamma_rel, 1e-15);
        EXPECT_GT(vv.gamma_rel, 0.0);
        EXPECT_LT(vv.per_harmonic.at(0).first, 1e-15);
        double amin = 0.0, rmin = 1e9, amax = 0.0, dmax = -1.0;
        for (double a = z - 0.3; a <= z + 0.3; a += 0.001) {
            const RateSet r = rates(ResonanceContext({1.0, 4.1, a, 2.0}, 2), bath, RateMethod::vv2);
            if (r.gamma_rel < rmin) rmin = r.gamma_rel, amin = a;
            if (r.gamma_deph > dmax) dmax = r.gamma_deph, amax = a;
        }
        EXPECT_LT(std::abs(amin - z), 0.15) << z;
        if (z > 15.0) { EXPECT_LT(std::abs(amax - z), 0.1) << z; }
    }
}

TEST(AnalyticDensity, SolvesMasterEquation) {
    // Independent spectral solution of d/dt rho = M rho; its derivative is
    // compared with the generator applied to the library trajectory.
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    std::vector<double> times;
    for (double t = 0.0; t <= 400.0; t += 3.7) times.push_back(t);
    const auto ad = analytic_density_evolution(c, bath, XOrder::vv2, times);
    const DoubletEnergies en = energies_of(ad.modes);
    const Eigen::Matrix4cd M = mrwa_generator(ad.L, en);
    Eigen::ComplexEigenSolver<Eigen::Matrix4cd> es(M);
    const Eigen::Matrix4cd V = es.eigenvectors();
    const Eigen::Vector4cd lam = es.eigenvalues();
    const Eigen::Vector4cd coef = V.partialPivLu().solve(vec_density(ad.modes.initial_density()));
    const double grel = gamma_rel_of(ad.L);
    for (std::size_t i = 0; i < times.size(); ++i) {
        Eigen::Vector4cd r = Eigen::Vector4cd::Zero(), dr = Eigen::Vector4cd::Zero();
        for (int k = 0; k < 4; ++k) {
            const cplx e = std::exp(lam[k] * times[i]) * coef[k];
            r += e * V.col(k);
            dr += lam[k] * e * V.col(k);
        }
        EXPECT_NEAR(r(0).real(), ad.rho.rho_mm[i], 1e-10);
        EXPECT_LT(std::abs(r(1) - ad.rho.rho_mp[i]), 1e-10);
        const Eigen::Vector4cd lib(ad.rho.rho_mm[i], ad.rho.rho_mp[i], std::conj(ad.rho.rho_mp[i]), 1.0 - ad.rho.rho_mm[i]);
        EXPECT_LT((dr - M * lib).cwiseAbs().maxCoeff(), 1e-9 * grel) << times[i];
    }
}

TEST(AnalyticDensity, LongTimeLimitAndTrace) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    const auto ad = analytic_density_evolution(c, bath, XOrder::vv2, {0.0, 20000.0});
    // Non-secular entries leave a small stationary coherence, which shifts
    // the population off the secular value at second order.
    EXPECT_NEAR(ad.rho.rho_mm.back(), stationary_population(ad.L), 1e-6);
    EXPECT_LT(std::abs(ad.rho.rho_mp.back()), 1e-3);
    EXPECT_NEAR(ad.rho.rho_mm.front(), ad.modes.initial_density()(0, 0).real(), 1e-14);
}

TEST(AnalyticDensity, PrintedFirstOrderFormAgrees) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    std::vector<double> times;
    for (double t = 0.0; t <= 400.0; t += 0.5) times.push_back(t);
    const auto ad = analytic_density_evolution(c, bath, XOrder::vv2, times);
    const auto fo = mrwa_first_order(ad.L, ad.modes.splitting(), ad.modes.initial_density());
    for (std::size_t i = 0; i < times.size(); ++i) {
        const auto [mm, mp] = fo(times[i]);
        EXPECT_NEAR(mm, ad.rho.rho_mm[i], 1e-3);
        EXPECT_LT(std::abs(mp - ad.rho.rho_mp[i]), 1e-3);
    }
}

TEST(AnalyticDensity, ClosedLimitIsNondissipative) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    std::vector<double> times;
    for (double t = 0.0; t <= 100.0; t += 0.25) times.push_back(t);
    const auto ad = analytic_density_evolution(c, {0.0, 10.0}, XOrder::vv2, times);
    const auto P = survival_from_density(ad.rho, ad.modes);
    const auto ref = survival_nondissipative(c, SurvivalTier::vv2, times);
    for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(P.values[i], ref[i], 1e-10);
}

TEST(Fbr, ClosedSystemMatchesSchrodingerStepping) {
    for (const SystemParams& p : {SystemParams{1.0, 4.1, 3.0, 2.0}, SystemParams{1.0, 4.0, 4.1, 4.0}}) {
        const int m = nearest_resonance(p);
        const ModePair modes = numeric_pair(p, m);
        std::vector<double> times;
        for (double t = 0.0; t <= 40.0; t += 0.2) times.push_back(t);
        const auto rho = numeric_fbr_solve(modes, {0.0, 10.0}, modes.initial_density(), times);
        const auto P = survival_from_density(rho, modes);
        const auto ref = oracle::survival_rk4(p, times, 5e-4);
        for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(P.values[i], ref[i], 1e-6) << times[i];
    }
}

TEST(Fbr, TraceAndHermiticityStructure) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ModePair modes = numeric_pair(p, 2);
    const auto times = uniform_grid(100.0, 501);
    Diagnostics d;
    const auto rho = numeric_fbr_solve(modes, bath, modes.initial_density(), times, {}, &d);
    for (std::size_t i = 0; i < times.size(); ++i) {
        EXPECT_GE(rho.rho_mm[i], -1e-3);
        EXPECT_LE(rho.rho_mm[i], 1.0 + 1e-3);
    }
    for (const auto& w : d.warnings) EXPECT_EQ(w.find("positivity"), std::string::npos) << w;
    EXPECT_THROW(numeric_fbr_solve(modes, bath, modes.initial_density(), {}), validation_error);
    EXPECT_THROW(numeric_fbr_solve(modes, bath, modes.initial_density(), {1.0, 0.5}), validation_error);
}

TEST(Fbr, MrwaIsFirstOrderInCoupling) {
    // Same modes and coefficients: MRWA against the full time-dependent
    // equation, the error scales with kappa.
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ModePair modes = numeric_pair(p, 2);
    const auto times = uniform_grid(200.0, 2001);
    const XTable X = numeric_xtable(modes, default_harmonic_cutoff(p));
    for (double kappa : {0.005, 0.01}) {
        const BathParams b{kappa, 10.0};
        const auto fbr = numeric_fbr_solve(modes, b, modes.initial_density(), times);
        const auto mr = mrwa_evolution(mrwa_coefficients(X, energies_of(modes), b, p), energies_of(modes),
                                       modes.initial_density(), times, SolutionTier::numeric);
        double d = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) d = std::max(d, std::abs(mr.rho_mm[i] - fbr.rho_mm[i]));
        EXPECT_LT(d, kappa);
    }
}

TEST(Fbr, WeakCouplingConsistencyOfPopulations) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    const ModePair modes = numeric_pair(p, 2);
    const auto times = uniform_grid(200.0, 2001);
    for (double kappa : {0.005, 0.01}) {
        const BathParams b{kappa, 10.0};
        const auto ad = analytic_density_evolution(c, b, XOrder::vv2, times);
        const auto fbr = numeric_fbr_solve(modes, b, modes.initial_density(), times);
        double d = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) d = std::max(d, std::abs(ad.rho.rho_mm[i] - fbr.rho_mm[i]));
        EXPECT_LT(d, 10.0 * kappa);
    }
}

TEST(Fbr, SurvivalDriftIsTheSecondOrderFrequency) {
    // The analytic survival drifts from the numeric one by the accumulated
    // phase (Omega^(2) - Omega_exact) t. With the exact quasienergies inserted
    // into the second-order modes and coefficients the two agree.
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    const ModePair num = numeric_pair(p, 2);
    const auto times = uniform_grid(200.0, 2001);
    const auto fbr = numeric_fbr_solve(num, bath, num.initial_density(), times);
    const auto Pn = survival_from_density(fbr, num);

    const auto ad = analytic_density_evolution(c, bath, XOrder::vv2, times);
    const auto Pa = survival_from_density(ad.rho, ad.modes);

    ModePair fixed = vv_eigenstates(c, StateOrder::order2).trimmed(1e-17);
    fixed.e_minus = num.e_minus;
    fixed.e_plus = num.e_plus;
    const XTable X = analytic_xtable(c, XOrder::vv2, default_harmonic_cutoff(p));
    const auto rho = mrwa_evolution(mrwa_coefficients(X, energies_of(fixed), bath, p), energies_of(fixed),
                                    fixed.initial_density(), times, fixed.tier);
    const auto Pf = survival_from_density(rho, fixed);

    double d_plain = 0.0, d_fixed = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        d_plain = std::max(d_plain, std::abs(Pa.values[i] - Pn.values[i]));
        d_fixed = std::max(d_fixed, std::abs(Pf.values[i] - Pn.values[i]));
    }
    EXPECT_LT(d_fixed, 0.03);
    EXPECT_GT(d_plain, d_fixed);
    EXPECT_NEAR(ad.modes.splitting() - num.splitting(), vv2_frequency(c) - (num.splitting() - 2.0 * p.omega), 1e-12);
}

TEST(Fbr, ShortTimeSurvivalAgreement) {
    const SystemParams p{1.0, 4.1, 3.0, 2.0};
    const ResonanceContext c(p, 2);
    const ModePair num = numeric_pair(p, 2);
    const auto times = uniform_grid(20.0, 401);
    const auto Pn = survival_from_density(numeric_fbr_solve(num, bath, num.initial_density(), times), num);
    const auto ad = analytic_density_evolution(c, bath, XOrder::vv2, times);
    const auto Pa = survival_from_density(ad.rho, ad.modes);
    for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(Pa.values[i], Pn.values[i], 0.03) << times[i];
}
