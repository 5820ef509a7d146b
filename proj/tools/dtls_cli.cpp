// dtls: command-line front end. Every number is in units of delta (delta = 1);
// beta is hbar*beta*delta. Each run writes <out>.csv (data) and <out>.json
// (parameter echo, version, truncation and convergence diagnostics).
//
// Exit codes: 0 success, 2 invalid input / output path, 3 numerical failure.

#include "dtls/analysis.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using json = nlohmann::ordered_json;
using namespace dtls;

constexpr const char* kVersion = "1.0.0";
constexpr int kFormatVersion = 1;

struct Range {
    double lo{0}, hi{0}, step{1};
    std::string text;

    std::vector<double> values() const {
        const long n = std::lround((hi - lo) / step) + 1;
        if (n < 1 || n > 10'000'000) throw validation_error("range '" + text + "' yields no points");
        std::vector<double> v(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + step * static_cast<double>(i);
        return v;
    }
};

Range parse_range(const std::string& s) {
    Range r;
    r.text = s;
    std::vector<double> parts;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ':')) {
        try {
            std::size_t pos = 0;
            parts.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw validation_error("malformed range '" + s + "' (expected lo:hi:step)");
        }
    }
    if (parts.size() != 3) throw validation_error("malformed range '" + s + "' (expected lo:hi:step)");
    r.lo = parts[0];
    r.hi = parts[1];
    r.step = parts[2];
    if (!(r.step > 0.0) || r.hi < r.lo) throw validation_error("range '" + s + "' needs lo <= hi and step > 0");
    return r;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}
    void row(const std::vector<double>& v) {
        if (v.size() != header_.size()) throw std::logic_error("csv row width mismatch");
        rows_.push_back(v);
    }
    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
        out += '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + fmt(r[i]);
            out += '\n';
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

struct Output {
    std::string prefix;

    void write(const std::string& csv, const json& meta) const {
        if (prefix == "-") {
            std::cout << csv;
            return;
        }
        write_file(prefix + ".csv", csv);
        write_file(prefix + ".json", meta.dump(2) + "\n");
    }

    static void write_file(const std::string& path, const std::string& data) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw validation_error("cannot open output file '" + path + "'");
        f << data;
        if (!f) throw validation_error("failed writing '" + path + "'");
    }
};

json base_meta(const std::string& command, const std::vector<std::string>& argv) {
    json j;
    j["format_version"] = kFormatVersion;
    j["library_version"] = kVersion;
    j["command"] = command;
    j["argv"] = argv;
    j["units"] = "energies and frequencies in units of delta, beta in units of 1/delta";
    return j;
}

std::vector<SolutionTier> parse_tiers(const std::string& s) {
    std::vector<SolutionTier> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "rwa") out.push_back(SolutionTier::rwa);
        else if (tok == "vv1") out.push_back(SolutionTier::vv1);
        else if (tok == "vv2") out.push_back(SolutionTier::vv2);
        else if (tok == "vv2_averaged") out.push_back(SolutionTier::vv2_averaged);
        else if (tok == "numeric") out.push_back(SolutionTier::numeric);
        else throw validation_error("unknown tier '" + tok + "'");
    }
    if (out.empty()) throw validation_error("no tiers selected");
    return out;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stoi(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw validation_error("malformed integer list '" + s + "'");
        }
    }
    return out;
}

// Shared option blocks ---------------------------------------------------

struct SysOpts {
    double eps{4.0}, omega{2.0}, amp{3.0};
    int m{INT32_MIN};
    void add(CLI::App* app, bool with_eps = true, bool with_amp = true) {
        if (with_eps) app->add_option("--eps", eps, "static bias epsilon")->capture_default_str();
        app->add_option("--omega", omega, "drive frequency omega")->capture_default_str();
        if (with_amp) app->add_option("--amp", amp, "drive amplitude A")->capture_default_str();
        app->add_option("--m", m, "photon order (default round(eps/omega))");
    }
    SystemParams params() const {
        SystemParams p{1.0, eps, amp, omega};
        p.validate();
        return p;
    }
    int order(const SystemParams& p) const { return m == INT32_MIN ? nearest_resonance(p) : m; }
    json to_json() const {
        json j{{"eps", eps}, {"omega", omega}, {"amp", amp}};
        j["m"] = m == INT32_MIN ? json(nullptr) : json(m);
        return j;
    }
};

struct BathOpts {
    double kappa{0.0}, beta{10.0};
    void add(CLI::App* app, double kappa_default = 0.0) {
        kappa = kappa_default;
        app->add_option("--kappa", kappa, "Ohmic coupling kappa")->capture_default_str();
        app->add_option("--beta", beta, "inverse temperature hbar*beta*delta")->capture_default_str();
    }
    BathParams params() const {
        BathParams b{kappa, beta};
        b.validate();
        return b;
    }
};

struct TimeOpts {
    double t_max{100.0};
    std::size_t points{4001};
    void add(CLI::App* app) {
        app->add_option("--t-max", t_max, "final time")->capture_default_str();
        app->add_option("--points", points, "number of time samples")->capture_default_str();
    }
};

// Commands ---------------------------------------------------------------

struct TierRun {
    std::map<SolutionTier, Trajectory> traj;
    Diagnostics diag;
    json info;
};

TierRun run_tiers(const SystemParams& p, int m, const BathParams& b, const std::vector<SolutionTier>& tiers,
                  const std::vector<double>& times) {
    TierRun out;
    const ResonanceContext c(p, m);
    out.info["omega_rwa"] = rwa_frequency(c);
    out.info["omega_vv2"] = vv2_frequency(c);
    out.info["theta_rwa"] = mixing_angle(c, AngleOrder::rwa);
    out.info["theta_vv2"] = mixing_angle(c, AngleOrder::vv2);
    out.info["cdt_flag"] = is_cdt_point(c);
    for (SolutionTier t : tiers) {
        Trajectory tr;
        tr.times = times;
        tr.params = p;
        tr.tier = to_string(t);
        if (t == SolutionTier::numeric) {
            const auto cd = converged_doublet(p, m);
            out.info["omega_numeric"] = cd.doublet.omega_numeric;
            out.info["numeric_n_tr"] = cd.n_tr;
            out.info["numeric_doublings"] = cd.doublings;
            out.info["numeric_last_change"] = cd.last_change;
            const ModePair modes = numeric_modes(cd.doublet, p).trimmed(1e-16);
            if (b.kappa == 0.0) {
                tr = closed_survival(modes, times);
            } else {
                const auto rho = numeric_fbr_solve(modes, b, modes.initial_density(), times, {}, &out.diag);
                tr = survival_from_density(rho, modes);
            }
        } else if (b.kappa == 0.0) {
            const SurvivalTier st = t == SolutionTier::rwa   ? SurvivalTier::rwa
                                    : t == SolutionTier::vv1 ? SurvivalTier::vv1
                                    : t == SolutionTier::vv2 ? SurvivalTier::vv2
                                                             : SurvivalTier::vv2_averaged;
            tr.values = survival_nondissipative(c, st, times);
        } else {
            if (t == SolutionTier::vv2_averaged) throw validation_error("vv2_averaged has no dissipative form");
            const XOrder o = t == SolutionTier::rwa ? XOrder::rwa : t == SolutionTier::vv1 ? XOrder::vv1 : XOrder::vv2;
            const auto ad = analytic_density_evolution(c, b, o, times, std::nullopt, &out.diag);
            tr = survival_from_density(ad.rho, ad.modes);
            out.info[std::string("gamma_rel_") + to_string(t)] = gamma_rel_of(ad.L);
            out.info[std::string("gamma_deph_") + to_string(t)] = gamma_deph_of(ad.L);
        }
        out.traj[t] = std::move(tr);
    }
    return out;
}

json diag_json(const Diagnostics& d) { return json(d.warnings); }

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"Driven two-level system: Floquet numerics, RWA and Van Vleck analytics, dissipative dynamics"};
    app.set_config("--config", "", "key = value configuration file (command line takes precedence)");
    app.require_subcommand(1);
    std::string out_prefix;
    unsigned threads = 0;
    app.add_option("--out", out_prefix, "output prefix (writes <out>.csv and <out>.json; '-' = CSV to stdout)");
    app.add_option("--threads", threads, "worker threads (default: DTLS_THREADS or hardware concurrency)");

    // spectrum
    auto* sp = app.add_subcommand("spectrum", "folded quasienergies vs bias: numeric and second-order analytic");
    SysOpts sp_sys;
    sp_sys.add(sp, false, true);
    std::string sp_range = "0:8:0.02";
    sp->add_option("--eps-range", sp_range, "bias grid lo:hi:step")->capture_default_str();

    // dynamics
    auto* dy = app.add_subcommand("dynamics", "survival probability P(t) per solution tier");
    SysOpts dy_sys;
    dy_sys.add(dy);
    BathOpts dy_bath;
    dy_bath.add(dy);
    TimeOpts dy_time;
    dy_time.add(dy);
    std::string dy_tiers = "rwa,vv2,numeric";
    dy->add_option("--tiers", dy_tiers, "comma list of rwa,vv1,vv2,vv2_averaged,numeric")->capture_default_str();

    // rates
    auto* ra = app.add_subcommand("rates", "relaxation and dephasing rates vs drive amplitude");
    SysOpts ra_sys;
    ra_sys.add(ra, true, false);
    BathOpts ra_bath;
    ra_bath.add(ra, 0.01);
    std::string ra_range = "0:20:0.05";
    ra->add_option("--amp-range", ra_range, "amplitude grid lo:hi:step")->capture_default_str();

    // xcoeffs
    auto* xc = app.add_subcommand("xcoeffs", "position-matrix Fourier coefficients vs drive amplitude");
    SysOpts xc_sys;
    xc_sys.add(xc, true, false);
    std::string xc_range = "0:12:0.1";
    std::string xc_harm = "-2,0,2,4";
    xc->add_option("--amp-range", xc_range, "amplitude grid lo:hi:step")->capture_default_str();
    xc->add_option("--harmonics", xc_harm, "comma list of n")->capture_default_str();

    // fourier
    auto* fo = app.add_subcommand("fourier", "spectrum |F(nu)| of P(t) with peak classification");
    SysOpts fo_sys;
    fo_sys.add(fo);
    BathOpts fo_bath;
    fo_bath.add(fo);
    TimeOpts fo_time;
    fo_time.t_max = 400.0;
    fo_time.points = 16001;
    fo_time.add(fo);
    std::string fo_tiers = "rwa,vv2";
    std::string fo_window = "hann";
    bool fo_asym = false;
    double fo_nu_max = 10.0;
    fo->add_option("--tiers", fo_tiers, "comma list of tiers")->capture_default_str();
    fo->add_option("--window", fo_window, "none|hann")->capture_default_str();
    fo->add_flag("--subtract-asymptote", fo_asym, "remove the late-time drive-periodic part first");
    fo->add_option("--nu-max", fo_nu_max, "largest frequency written")->capture_default_str();

    // validity
    auto* va = app.add_subcommand("validity", "relative frequency deviation maps over (omega, A)");
    double va_eps = 4.0;
    std::string va_om = "0.5:6:0.0555555555555556", va_amp = "0.12:12:0.12";
    std::string va_ref = "vv2";
    double va_clip = 0.15;
    int va_ntr = -1;
    va->add_option("--eps", va_eps, "static bias")->capture_default_str();
    va->add_option("--omega-range", va_om, "omega grid lo:hi:step")->capture_default_str();
    va->add_option("--amp-range", va_amp, "amplitude grid lo:hi:step")->capture_default_str();
    va->add_option("--reference", va_ref, "vv2 (RWA vs second order) or numeric (second order vs exact)")
        ->capture_default_str();
    va->add_option("--clip", va_clip, "reporting clip level")->capture_default_str();
    va->add_option("--ntr", va_ntr, "fixed Floquet truncation for numeric cells (default adaptive rule)");

    // scenario
    auto* sc = app.add_subcommand("scenario", "coherent destruction of tunneling / driving-induced oscillations");
    std::string sc_kind;
    ScenarioConfig sc_cfg;
    sc->add_option("kind", sc_kind, "cdt or dito")->required()->check(CLI::IsMember({"cdt", "dito"}));
    sc->add_option("--m", sc_cfg.m, "photon order")->capture_default_str();
    sc->add_option("--omega", sc_cfg.omega, "drive frequency")->capture_default_str();
    sc->add_option("--amp", sc_cfg.amp, "drive amplitude (dito)")->capture_default_str();
    sc->add_option("--zero-index", sc_cfg.zero_index, "which zero of J_m fixes A (cdt)")->capture_default_str();
    sc->add_option("--kappa", sc_cfg.kappa, "Ohmic coupling")->capture_default_str();
    sc->add_option("--beta", sc_cfg.beta, "inverse temperature")->capture_default_str();
    sc->add_option("--t-max", sc_cfg.t_max, "final time")->capture_default_str();
    sc->add_option("--points", sc_cfg.n_points, "time samples")->capture_default_str();
    sc->add_option("--detuned-omega", sc_cfg.detuned_omega, "comparison frequency for dito (<= 0 disables)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const auto sub = app.get_subcommands().front();
    const std::string cmd = sub->get_name();
    const Output out{out_prefix.empty() ? (cmd == "scenario" ? "scenario_" + sc_kind : cmd) : out_prefix};
    json meta = base_meta(cmd, args);
    meta["threads"] = threads == 0 ? default_thread_count() : threads;

    try {
        if (cmd == "spectrum") {
            SystemParams base = sp_sys.params();
            const Range r = parse_range(sp_range);
            const auto eps = r.values();
            meta["params"] = sp_sys.to_json();
            meta["params"]["eps_range"] = sp_range;
            std::vector<std::vector<double>> rows(eps.size());
            std::vector<int> ntr(eps.size());
            parallel_for(
                eps.size(),
                [&](std::size_t i) {
                    SystemParams p = base;
                    p.epsilon = eps[i];
                    const int m = sp_sys.order(p);
                    const TruncationConfig tr = TruncationConfig::defaults_for(p);
                    const FloquetSpectrum s = solve_floquet(p, tr);
                    const auto cp = s.central_pair();
                    const ResonanceContext c(p, m);
                    const auto [am, ap] = analytic_quasienergies(c, AngleOrder::vv2);
                    double gap = std::nan("");
                    try {
                        gap = central_doublet(s, p, m).omega_numeric;
                    } catch (const numerical_error&) {
                    }
                    rows[i] = {eps[i], static_cast<double>(m), cp[0], cp[1], fold_quasienergy(am, p.omega),
                               fold_quasienergy(ap, p.omega), gap, ap - am};
                    ntr[i] = tr.n_tr;
                },
                threads);
            CsvWriter csv({"eps", "m", "e_numeric_0", "e_numeric_1", "e_vv2_minus", "e_vv2_plus", "gap_numeric", "gap_vv2"});
            for (const auto& row : rows) csv.row(row);
            meta["truncation"] = {{"rule", "n_tr = ceil(2A/omega + |eps|/omega) + 10"},
                                  {"n_tr_min", *std::min_element(ntr.begin(), ntr.end())},
                                  {"n_tr_max", *std::max_element(ntr.begin(), ntr.end())}};
            out.write(csv.str(), meta);
        } else if (cmd == "dynamics") {
            const SystemParams p = dy_sys.params();
            const int m = dy_sys.order(p);
            const BathParams b = dy_bath.params();
            const auto tiers = parse_tiers(dy_tiers);
            const auto times = uniform_grid(dy_time.t_max, dy_time.points);
            meta["params"] = dy_sys.to_json();
            meta["params"].update({{"m_used", m}, {"kappa", b.kappa}, {"beta", b.beta}, {"t_max", dy_time.t_max},
                                   {"points", dy_time.points}, {"tiers", dy_tiers}});
            TierRun run = run_tiers(p, m, b, tiers, times);
            std::vector<std::string> header{"t"};
            for (auto t : tiers) header.push_back(std::string("P_") + to_string(t));
            CsvWriter csv(header);
            for (std::size_t i = 0; i < times.size(); ++i) {
                std::vector<double> row{times[i]};
                for (auto t : tiers) row.push_back(run.traj[t].values[i]);
                csv.row(row);
            }
            meta["results"] = run.info;
            meta["diagnostics"] = diag_json(run.diag);
            out.write(csv.str(), meta);
        } else if (cmd == "rates") {
            SystemParams base = ra_sys.params();
            const BathParams b = ra_bath.params();
            const auto amps = parse_range(ra_range).values();
            meta["params"] = ra_sys.to_json();
            meta["params"].update({{"kappa", b.kappa}, {"beta", b.beta}, {"amp_range", ra_range}});
            std::vector<std::vector<double>> rows(amps.size());
            parallel_for(
                amps.size(),
                [&](std::size_t i) {
                    SystemParams p = base;
                    p.amp = amps[i];
                    const ResonanceContext c(p, ra_sys.order(p));
                    const RateSet rr = rates(c, b, RateMethod::rwa);
                    const RateSet rv = rates(c, b, RateMethod::vv2);
                    rows[i] = {amps[i], rr.gamma_rel, rv.gamma_rel, rr.gamma_deph, rv.gamma_deph};
                },
                threads);
            CsvWriter csv({"A", "grel_rwa", "grel_vv2", "gdeph_rwa", "gdeph_vv2"});
            for (const auto& row : rows) csv.row(row);
            meta["harmonic_cutoff"] = "n_max = 2 ceil(A/omega) + 8";
            out.write(csv.str(), meta);
        } else if (cmd == "xcoeffs") {
            SystemParams base = xc_sys.params();
            const auto amps = parse_range(xc_range).values();
            const auto harm = parse_ints(xc_harm);
            meta["params"] = xc_sys.to_json();
            meta["params"].update({{"amp_range", xc_range}, {"harmonics", xc_harm}});
            std::vector<std::string> header{"A"};
            for (int n : harm)
                for (const char* k : {"num", "vv1", "vv2"}) {
                    header.push_back(std::string("Xmm_") + k + "_" + std::to_string(n));
                    header.push_back(std::string("Xmp_") + k + "_" + std::to_string(n));
                }
            std::vector<std::vector<double>> rows(amps.size());
            Diagnostics diag;
            std::mutex mu;
            parallel_for(
                amps.size(),
                [&](std::size_t i) {
                    SystemParams p = base;
                    p.amp = amps[i];
                    const int m = xc_sys.order(p);
                    const ResonanceContext c(p, m);
                    const auto cd = converged_doublet(p, m);
                    const ModePair modes = numeric_modes(cd.doublet, p);
                    Diagnostics local;
                    std::vector<double> row{amps[i]};
                    for (int n : harm) {
                        row.push_back(numeric_position_coeffs(modes.minus, modes.minus, n, &local).real());
                        row.push_back(numeric_position_coeffs(modes.minus, modes.plus, n, &local).real());
                        for (XOrder o : {XOrder::vv1, XOrder::vv2}) {
                            row.push_back(analytic_position_coeffs(c, Branch::minus, Branch::minus, n, o).real());
                            row.push_back(analytic_position_coeffs(c, Branch::minus, Branch::plus, n, o).real());
                        }
                    }
                    rows[i] = row;
                    std::lock_guard lk(mu);
                    for (auto& w : local.warnings) diag.warn("A=" + fmt(amps[i]) + ": " + w);
                },
                threads);
            CsvWriter csv(header);
            for (const auto& row : rows) csv.row(row);
            meta["diagnostics"] = diag_json(diag);
            out.write(csv.str(), meta);
        } else if (cmd == "fourier") {
            const SystemParams p = fo_sys.params();
            const int m = fo_sys.order(p);
            const BathParams b = fo_bath.params();
            const auto tiers = parse_tiers(fo_tiers);
            if (fo_window != "hann" && fo_window != "none") throw validation_error("window must be hann or none");
            const auto times = uniform_grid(fo_time.t_max, fo_time.points);
            meta["params"] = fo_sys.to_json();
            meta["params"].update({{"m_used", m}, {"kappa", b.kappa}, {"beta", b.beta}, {"t_max", fo_time.t_max},
                                   {"points", fo_time.points}, {"tiers", fo_tiers}, {"window", fo_window},
                                   {"subtract_asymptote", fo_asym}, {"nu_max", fo_nu_max}});
            TierRun run = run_tiers(p, m, b, tiers, times);
            std::vector<SpectrumEstimate> specs;
            json peaks = json::object();
            for (auto t : tiers) {
                SpectrumOptions so;
                so.window = fo_window == "hann" ? WindowKind::hann : WindowKind::none;
                so.subtract_asymptote = fo_asym;
                so.omega = p.omega;
                const std::string key = t == SolutionTier::numeric ? "omega_numeric"
                                        : t == SolutionTier::rwa   ? "omega_rwa"
                                                                   : "omega_vv2";
                so.dressed = run.info.contains(key) ? run.info[key].get<double>() : 0.0;
                if (t == SolutionTier::vv1) so.dressed = run.info["omega_rwa"].get<double>();
                specs.push_back(fourier_spectrum(run.traj[t], so));
                json pj = json::array();
                for (const auto& pk : specs.back().peaks)
                    pj.push_back({{"nu", pk.nu}, {"height", pk.height}, {"width", pk.width},
                                  {"class", to_string(pk.cls)}, {"n", pk.harmonic}});
                json lines = json::array();
                for (const auto& hl : specs.back().harmonic_lines)
                    lines.push_back({{"n", hl.n}, {"re", hl.coefficient.real()}, {"im", hl.coefficient.imag()}});
                peaks[to_string(t)] = {{"peaks", pj}, {"harmonic_lines", lines}, {"resolution", specs.back().resolution}};
            }
            std::vector<std::string> header{"nu"};
            for (auto t : tiers) header.push_back(std::string("F_") + to_string(t));
            CsvWriter csv(header);
            const auto& freq = specs.front().frequencies;
            for (std::size_t k = 0; k < freq.size() && freq[k] <= fo_nu_max; ++k) {
                std::vector<double> row{freq[k]};
                for (const auto& s : specs) row.push_back(s.magnitudes[k]);
                csv.row(row);
            }
            meta["results"] = run.info;
            meta["spectra"] = peaks;
            meta["diagnostics"] = diag_json(run.diag);
            out.write(csv.str(), meta);
        } else if (cmd == "validity") {
            if (va_ref != "vv2" && va_ref != "numeric") throw validation_error("reference must be vv2 or numeric");
            const auto oms = parse_range(va_om).values();
            const auto amps = parse_range(va_amp).values();
            std::function<int(const SystemParams&)> trunc;
            if (va_ntr > 0) trunc = [&](const SystemParams&) { return va_ntr; };
            const DeviationMap dm = deviation_map(oms, amps, va_eps,
                                                  va_ref == "vv2" ? DeviationReference::vv2 : DeviationReference::numeric,
                                                  SystemParams{}, threads, trunc);
            meta["params"] = {{"eps", va_eps}, {"omega_range", va_om}, {"amp_range", va_amp}, {"reference", va_ref},
                              {"clip", va_clip}, {"ntr", va_ntr}};
            CsvWriter csv({"omega", "A", "m", "deviation", "clipped", "singular", "failed"});
            std::size_t nsing = 0, nfail = 0;
            for (std::size_t io = 0; io < oms.size(); ++io)
                for (std::size_t ia = 0; ia < amps.size(); ++ia) {
                    const std::size_t k = dm.index(io, ia);
                    nsing += dm.singular[k];
                    nfail += dm.failed[k];
                    csv.row({oms[io], amps[ia], static_cast<double>(dm.m[k]), dm.values[k],
                             std::min(dm.values[k], va_clip), static_cast<double>(dm.singular[k]),
                             static_cast<double>(dm.failed[k])});
                }
            meta["singular_cells"] = nsing;
            meta["failed_cells"] = nfail;
            out.write(csv.str(), meta);
        } else if (cmd == "scenario") {
            const ScenarioKind kind = sc_kind == "cdt" ? ScenarioKind::cdt : ScenarioKind::dito;
            const ScenarioReport rep = run_scenario(kind, sc_cfg);
            meta["params"] = {{"kind", sc_kind},       {"m", sc_cfg.m},         {"omega", sc_cfg.omega},
                              {"amp", sc_cfg.amp},     {"zero_index", sc_cfg.zero_index},
                              {"kappa", sc_cfg.kappa}, {"beta", sc_cfg.beta},   {"t_max", sc_cfg.t_max},
                              {"points", sc_cfg.n_points}, {"detuned_omega", sc_cfg.detuned_omega}};
            meta["derived"] = {{"epsilon", rep.params.epsilon}, {"amp", rep.params.amp}};
            meta["results"] = rep.numbers;
            meta["diagnostics"] = diag_json(rep.diagnostics);
            std::vector<std::string> header{"t"};
            for (const auto& [name, tr] : rep.trajectories) header.push_back("P_" + name);
            CsvWriter csv(header);
            const auto& t0 = rep.trajectories.begin()->second.times;
            for (std::size_t i = 0; i < t0.size(); ++i) {
                std::vector<double> row{t0[i]};
                for (const auto& [name, tr] : rep.trajectories) row.push_back(tr.values[i]);
                csv.row(row);
            }
            out.write(csv.str(), meta);
        }
    } catch (const validation_error& e) {
        std::cerr << "dtls: invalid input: " << e.what() << "\n";
        return 2;
    } catch (const domain_error& e) {
        std::cerr << "dtls: invalid input: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "dtls: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "dtls: numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
