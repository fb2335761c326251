#ifndef OMSQZ_OMCAVITY_HPP
#define OMSQZ_OMCAVITY_HPP

// Linearized quantum-noise model of a detuned two-mirror cavity whose output
// coupler sits on a mechanical oscillator.
//
// Conventions: fields and quadratures vary as exp(-i Omega t). The intracavity
// carrier is taken real, so quadrature 0 of the transmitted field is its
// amplitude quadrature. Three vacuum ports drive the cavity (input coupler,
// output coupler, round-trip loss); the mirror responds to radiation pressure
// plus an independent force noise per mechanical mode. The cavity response is
// kept at full frequency dependence.

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "omsqz/constants.hpp"
#include "omsqz/error.hpp"
#include "omsqz/qspace.hpp"

namespace omsqz {

struct CavityParams {
    double length = 0.01;            // m
    double wavelength = 1064e-9;     // m
    double t_in_ppm = 50.0;          // input coupler power transmission
    double t_out_ppm = 250.0;        // cantilever mirror power transmission
    double loss_ppm = 250.0;         // round-trip excess loss
    double detuning = 0.33;          // fraction of the HWHM linewidth, positive = blue
    double p_circ = 260.0;           // W

    void validate() const {
        auto ppm_ok = [](double v) { return v >= 0.0 && v < 1e4 && std::isfinite(v); };
        if (!(length > 0)) throw DomainError("cavity length must be positive");
        if (!(wavelength > 0)) throw DomainError("wavelength must be positive");
        if (!ppm_ok(t_in_ppm) || !ppm_ok(t_out_ppm) || !ppm_ok(loss_ppm))
            throw DomainError("transmissions and losses must lie in [0, 1e4) ppm");
        if (!(p_circ >= 0)) throw DomainError("circulating power must be non-negative");
        if (!std::isfinite(detuning)) throw DomainError("detuning must be finite");
    }

    friend bool operator==(const CavityParams&, const CavityParams&) = default;
};

enum class DampingModel { structural, viscous };

struct MechanicalMode {
    double mass = 50e-9;   // kg, effective mass at the beam spot
    double f0 = 876.0;     // Hz
    double q = 16000.0;
    DampingModel damping = DampingModel::structural;

    void validate() const {
        if (!(mass > 0)) throw DomainError("mode mass must be positive");
        if (!(f0 > 0)) throw DomainError("mode frequency must be positive");
        if (!(q > 1)) throw DomainError("mode quality factor must exceed 1");
    }

    double stiffness() const {
        const double w0 = constants::two_pi * f0;
        return mass * w0 * w0;
    }

    /// Inverse susceptibility k(1 - i/Q) - m W^2 (structural) or k - m W^2 - i m w0 W / Q.
    Complex inverse_susceptibility(double omega_hz) const {
        const double w = constants::two_pi * omega_hz;
        const double w0 = constants::two_pi * f0;
        const double k = stiffness();
        if (damping == DampingModel::structural)
            return Complex(k - mass * w * w, -k / q);
        return Complex(k - mass * w * w, -mass * w0 * w / q);
    }

    Complex susceptibility(double omega_hz) const { return 1.0 / inverse_susceptibility(omega_hz); }

    friend bool operator==(const MechanicalMode&, const MechanicalMode&) = default;
};

struct EnvironmentParams {
    double temperature = 295.0;  // K

    void validate() const {
        if (!(temperature >= 0)) throw DomainError("temperature must be non-negative");
    }

    friend bool operator==(const EnvironmentParams&, const EnvironmentParams&) = default;
};

/// Fundamental cantilever mode plus the 27 kHz mode. The second mode's beam
/// spot sits near a node, hence the large effective mass.
inline std::vector<MechanicalMode> default_modes() {
    return {MechanicalMode{50e-9, 876.0, 16000.0, DampingModel::structural},
            MechanicalMode{1e-2, 27e3, 2000.0, DampingModel::structural}};
}

inline double round_trip_loss(const CavityParams& c) {
    return (c.t_in_ppm + c.t_out_ppm + c.loss_ppm) * 1e-6;
}

inline double finesse(const CavityParams& c) {
    const double loss = round_trip_loss(c);
    if (!(loss > 0)) throw DomainError("finesse: zero total round-trip loss");
    return constants::two_pi / loss;
}

/// gamma = c / (4 L F), in Hz.
inline double linewidth_hwhm(const CavityParams& c) {
    return constants::c_light / (4.0 * c.length * finesse(c));
}

inline double escape_efficiency(const CavityParams& c) {
    const double total = c.t_in_ppm + c.t_out_ppm + c.loss_ppm;
    if (!(total > 0)) throw DomainError("escape_efficiency: zero total round-trip loss");
    return c.t_out_ppm / total;
}

/// Angular-frequency rates and couplings derived from CavityParams.
struct CavityRates {
    double kappa_in;    // amplitude decay rate through each port, rad/s
    double kappa_out;
    double kappa_loss;
    double kappa;       // total = 2 pi gamma
    double delta;       // laser - cavity detuning, rad/s
    double omega_laser;
    double g_om;        // d(omega_c)/dx = omega / L
    double photons;     // intracavity photon number

    explicit CavityRates(const CavityParams& c) {
        c.validate();
        const double per_ppm = constants::c_light / (4.0 * c.length) * 1e-6;
        kappa_in = c.t_in_ppm * per_ppm;
        kappa_out = c.t_out_ppm * per_ppm;
        kappa_loss = c.loss_ppm * per_ppm;
        kappa = kappa_in + kappa_out + kappa_loss;
        delta = c.detuning * kappa;
        omega_laser = constants::two_pi * constants::c_light / c.wavelength;
        g_om = omega_laser / c.length;
        // Force on the mirror is 2 P / c = hbar G n.
        photons = 2.0 * c.p_circ * c.length / (constants::c_light * constants::hbar * omega_laser);
    }

    /// 2 hbar G^2 n: scale of the radiation-pressure stiffness.
    double coupling() const { return 2.0 * constants::hbar * g_om * g_om * photons; }

    Complex cavity_determinant(double omega_hz) const {
        const Complex s(kappa, -constants::two_pi * omega_hz);
        return s * s + delta * delta;
    }
};

/// Radiation-pressure stiffness K(Omega) in N/m; F = -K x.
inline Complex optical_spring(const CavityParams& c, double omega_hz) {
    const CavityRates r(c);
    if (r.photons == 0.0) return Complex(0.0);
    return r.coupling() * r.delta / r.cavity_determinant(omega_hz);
}

// Kept for symmetry with the per-mode interface: the stiffness itself does
// not depend on the mode.
inline Complex optical_spring(const CavityParams& c, const MechanicalMode& /*mode*/,
                              double omega_hz) {
    return optical_spring(c, omega_hz);
}

/// Frequency where Re[K(Omega)] + k_mech = m (2 pi Omega)^2, or 0 if the spring is anti-restoring.
inline double spring_resonance(const CavityParams& c, const MechanicalMode& mode) {
    mode.validate();
    auto f = [&](double hz) {
        const double w = constants::two_pi * hz;
        return optical_spring(c, hz).real() + mode.stiffness() - mode.mass * w * w;
    };
    double lo = 0.0;
    if (f(lo) <= 0) return 0.0;
    double hi = std::max(1.0, mode.f0);
    while (f(hi) > 0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) return std::numeric_limits<double>::infinity();
    }
    for (int i = 0; i < 200 && hi - lo > 1e-9 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Fluctuation-dissipation force PSD, single-sided, N^2/Hz (classical limit).
inline double thermal_force_psd(const MechanicalMode& m, const EnvironmentParams& env,
                                double omega_hz) {
    const double kt = constants::k_boltzmann * env.temperature;
    const double w0 = constants::two_pi * m.f0;
    if (m.damping == DampingModel::structural) {
        if (!(omega_hz > 0)) throw DomainError("structural thermal noise needs omega > 0");
        return 4.0 * kt * m.mass * w0 * w0 / (m.q * constants::two_pi * omega_hz);
    }
    return 4.0 * kt * m.mass * w0 / m.q;
}

/// Zero-temperature part of the mechanical bath: 2 hbar |Im chi^-1|.
inline double zero_point_force_psd(const MechanicalMode& m, double omega_hz) {
    return 2.0 * constants::hbar * std::abs(m.inverse_susceptibility(omega_hz).imag());
}

struct OutputOptions {
    bool vacuum = true;       // optical vacuum ports, including their radiation-pressure drive
    bool thermal = true;      // classical thermal force on each mode
    bool zero_point = true;   // mechanical bath zero-point force
};

/// Linear response of the transmitted-field quadratures at one frequency.
struct OutputResponse {
    double freq = 0.0;
    Matrix2c from_input;      // per unit input-coupler vacuum quadrature
    Matrix2c from_output;     // per unit output-coupler vacuum quadrature
    Matrix2c from_loss;       // per unit loss-port vacuum quadrature
    Vector2c per_displacement;            // per metre of external displacement
    std::vector<Complex> per_force;       // per newton on each mode (scalar times per_displacement)
};

inline OutputResponse output_response(const CavityParams& c,
                                      const std::vector<MechanicalMode>& modes,
                                      double omega_hz) {
    const CavityRates r(c);
    const double w = constants::two_pi * omega_hz;
    Matrix2c m;
    m << Complex(r.kappa, -w), Complex(r.delta, 0), Complex(-r.delta, 0), Complex(r.kappa, -w);
    const Matrix2c mi = m.inverse();
    const Vector2c wv = mi.col(1);  // cavity response of the a2 equation

    Complex chi_total(0.0);
    std::vector<Complex> chis;
    chis.reserve(modes.size());
    for (const auto& mode : modes) {
        mode.validate();
        chis.push_back(mode.susceptibility(omega_hz));
        chi_total += chis.back();
    }

    // a2 picks up sqrt(2) G abar x; the force is sqrt(2) hbar G abar a1.
    const double abar = std::sqrt(r.photons);
    const double to_field = std::sqrt(2.0) * r.g_om * abar;
    const double to_force = std::sqrt(2.0) * constants::hbar * r.g_om * abar;
    const Complex den = 1.0 - wv(0) * to_field * to_force * chi_total;

    const double out_amp = std::sqrt(2.0 * r.kappa_out);
    auto port = [&](double kappa_port, bool is_output) {
        const Matrix2c inj = std::sqrt(2.0 * kappa_port) * mi;
        // x = chi_total * to_force * a1 / den for the vacuum part
        Eigen::RowVector2cd x_row = (chi_total * to_force / den) * inj.row(0);
        Matrix2c t = out_amp * (inj + (wv * to_field) * x_row);
        if (is_output) t -= Matrix2c::Identity();
        return t;
    };

    OutputResponse o;
    o.freq = omega_hz;
    o.from_input = port(r.kappa_in, false);
    o.from_output = port(r.kappa_out, true);
    o.from_loss = port(r.kappa_loss, false);
    o.per_displacement = out_amp * wv * (to_field / den);
    o.per_force.reserve(chis.size());
    for (const auto& chi : chis) o.per_force.push_back(chi);
    return o;
}

/// Quadrature spectral matrix of the transmitted field.
inline SpectralMatrix output_spectral_matrix(const CavityParams& c,
                                             const std::vector<MechanicalMode>& modes,
                                             const EnvironmentParams& env, double omega_hz,
                                             const OutputOptions& opt = {}) {
    if (!(omega_hz > 0)) throw DomainError("output_spectral_matrix: omega must be positive");
    env.validate();
    const OutputResponse o = output_response(c, modes, omega_hz);
    Matrix2c s = Matrix2c::Zero();
    if (opt.vacuum) {
        s += o.from_input * o.from_input.adjoint();
        s += o.from_output * o.from_output.adjoint();
        s += o.from_loss * o.from_loss.adjoint();
    }
    const Matrix2c dd = o.per_displacement * o.per_displacement.adjoint();
    for (std::size_t j = 0; j < modes.size(); ++j) {
        double force = 0.0;
        if (opt.thermal) force += thermal_force_psd(modes[j], env, omega_hz);
        if (opt.zero_point) force += zero_point_force_psd(modes[j], omega_hz);
        s += (std::norm(o.per_force[j]) * force) * dd;
    }
    // Remove rounding asymmetry.
    s = 0.5 * (s + s.adjoint()).eval();
    return {omega_hz, s};
}

/// Quadrature where displacement-type noise couples least into the transmitted field.
inline QuadratureAngle displacement_null(const CavityParams& c,
                                         const std::vector<MechanicalMode>& modes,
                                         double omega_hz) {
    const OutputResponse o = output_response(c, modes, omega_hz);
    const SpectralMatrix dd{omega_hz, o.per_displacement * o.per_displacement.adjoint()};
    return extremal_quadratures(dd).phi_min;
}

}  // namespace omsqz

#endif  // OMSQZ_OMCAVITY_HPP
