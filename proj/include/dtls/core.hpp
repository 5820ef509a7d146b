// core.hpp: parameter blocks and error types shared by every dtls module.
//
// Units: hbar = 1. Energies and frequencies share one unit; the CLI fixes
// delta = 1 so every number it prints is in units of the bare tunneling.

#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dtls {

inline constexpr double pi = std::numbers::pi;

// Thrown when inputs violate a documented precondition.
struct validation_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite or otherwise inadmissible arguments to a special function.
struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};

// Numerical failure: root bracketing, eigensolver, step-size control, ...
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Driven two-level system H(t) = -1/2 [delta sx + (epsilon + amp cos(omega t)) sz].
struct SystemParams {
    double delta{1.0};
    double epsilon{0.0};
    double amp{0.0};
    double omega{1.0};

    double period() const noexcept { return 2.0 * pi / omega; }
    double drive_ratio() const noexcept { return amp / omega; }

    void validate() const {
        if (!std::isfinite(delta) || !std::isfinite(epsilon) || !std::isfinite(amp) ||
            !std::isfinite(omega)) {
            throw validation_error("SystemParams: all fields must be finite");
        }
        if (!(delta > 0.0)) throw validation_error("SystemParams: delta must be > 0");
        if (!(omega > 0.0)) throw validation_error("SystemParams: omega must be > 0");
        if (amp < 0.0) throw validation_error("SystemParams: amp must be >= 0");
    }
};

// Ohmic bath G(nu) = kappa * nu at inverse temperature beta (hbar*beta).
struct BathParams {
    double kappa{0.0};
    double beta{1.0};

    void validate() const {
        if (!std::isfinite(kappa) || kappa < 0.0)
            throw validation_error("BathParams: kappa must be finite and >= 0");
        if (!std::isfinite(beta) || !(beta > 0.0))
            throw validation_error("BathParams: beta must be finite and > 0");
    }
};

// Photon ladder label of the unperturbed Floquet states |u0_{spin,n}>.
enum class Spin : int { up = 0, down = 1 };

// Eigenvalue of x = sz/2 on a localized state.
inline constexpr double position_value(Spin s) noexcept {
    return s == Spin::up ? 0.5 : -0.5;
}

inline std::string to_string(Spin s) { return s == Spin::up ? "up" : "down"; }

// Branch labels of the resonant doublet: minus = lower quasienergy.
enum class Branch : int { minus = 0, plus = 1 };

inline double sign_or_plus(double v) noexcept { return v < 0.0 ? -1.0 : 1.0; }

}  // namespace dtls
