#ifndef OMSQZ_HOMODYNE_HPP
#define OMSQZ_HOMODYNE_HPP

// Single-photodiode (unbalanced) homodyne readout.
//
// The signal carrier lies along the amplitude axis; the LO phasor is rotated
// by theta. The measured quadrature is the direction of the resultant
// carrier t E_S + r R(theta) E_LO relative to the signal. The beamsplitter
// couples the signal with power weight t^2 and the LO with r^2.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "omsqz/constants.hpp"
#include "omsqz/error.hpp"
#include "omsqz/format.hpp"
#include "omsqz/qspace.hpp"
#include "omsqz/spectral.hpp"

namespace omsqz {

struct BeamSplitter {
    double power_reflectivity = 0.035;  // r^2, the LO coupling

    friend bool operator==(const BeamSplitter&, const BeamSplitter&) = default;

    double r() const { return std::sqrt(power_reflectivity); }
    double t() const { return std::sqrt(1.0 - power_reflectivity); }

    void validate() const {
        if (!(power_reflectivity >= 0.0 && power_reflectivity <= 1.0))
            throw DomainError("beamsplitter reflectivity must lie in [0, 1]");
    }
};

struct HomodyneGeometry {
    double e_s = 0.0;     // sqrt(W), signal carrier at the combiner input
    double e_lo = 0.0;    // sqrt(W), LO carrier at the combiner input
    double theta = 0.0;   // LO phasor angle, rad
    double visibility = 1.0;

    void validate() const {
        if (!(e_s >= 0) || !(e_lo >= 0)) throw DomainError("carrier amplitudes must be >= 0");
        if (!(visibility >= 0.0 && visibility <= 1.0))
            throw DomainError("visibility must lie in [0, 1]");
    }
};

struct DetectionResult {
    QuadratureAngle phi_s;
    double phi_lo = 0.0;       // rad
    double e_sqz = 0.0;        // sqrt(W)
    double detected_power = 0.0;
};

inline DetectionResult resultant(const HomodyneGeometry& g, const BeamSplitter& bs) {
    g.validate();
    bs.validate();
    const double ts = bs.t() * g.e_s;
    const double rl = bs.r() * g.e_lo;
    const double x = ts + rl * std::cos(g.theta);
    const double y = rl * std::sin(g.theta);
    const double mag = std::hypot(x, y);
    if (!(ts + rl > 0) || mag <= 1e-12 * (ts + rl))
        throw DegenerateGeometry("homodyne resultant vanishes; measured quadrature undefined");
    DetectionResult d;
    d.phi_s = QuadratureAngle(std::atan2(y, x));
    d.phi_lo = std::atan2(-ts * std::sin(g.theta), rl + ts * std::cos(g.theta));
    d.e_sqz = mag;
    d.detected_power = mag * mag;
    return d;
}

/// Detected PSD at phi for a signal spectrum S: t^2 project(V^2 S + (1 - V^2) I, phi) + r^2.
inline double detected_psd(const SpectralMatrix& s, double phi, const BeamSplitter& bs,
                           double visibility) {
    const double v2 = visibility * visibility;
    const double sig = v2 * project(s, phi) + (1.0 - v2);
    return bs.t() * bs.t() * sig + bs.power_reflectivity;
}

inline double measured_psd(const SpectralMatrix& s, const HomodyneGeometry& g,
                           const BeamSplitter& bs) {
    const DetectionResult d = resultant(g, bs);
    return detected_psd(s, d.phi_s.radians(), bs, g.visibility);
}

struct LoSetting {
    double lo_power = 0.0;  // W, |r E_LO|^2
    double theta = 0.0;     // rad
};

/// Largest quadrature reachable at fixed detected power with LO power capped at max_lo_power.
inline double max_reachable_quadrature(double detected_power, double signal_power,
                                       double max_lo_power) {
    const double cosphi = (detected_power + signal_power - max_lo_power) /
                          (2.0 * std::sqrt(detected_power * signal_power));
    if (cosphi <= -1.0) return constants::pi / 2;  // every axis reachable
    if (cosphi >= 1.0) return 0.0;
    return std::min(std::acos(cosphi), constants::pi / 2);
}

/// LO power and phasor angle giving quadrature `target` at fixed detected power.
///
/// The resultant is fixed to sqrt(P_det) U(phi), so the LO phasor is what remains
/// after subtracting the signal. Angles above pi/2 are taken as negative
/// quadratures. Throws OutOfRange when the required LO power exceeds max_lo_power.
inline LoSetting lo_power_for_quadrature(QuadratureAngle target, double detected_power,
                                         double e_s, const BeamSplitter& bs,
                                         double max_lo_power = 30e-6) {
    bs.validate();
    if (!(detected_power > 0)) throw DomainError("detected power must be positive");
    if (!(e_s >= 0)) throw DomainError("signal amplitude must be non-negative");
    const double phi = target.signed_radians();
    const double ps = bs.t() * bs.t() * e_s * e_s;
    const double root_p = std::sqrt(detected_power);
    const double lx = root_p * std::cos(phi) - std::sqrt(ps);
    const double ly = root_p * std::sin(phi);
    LoSetting s;
    s.lo_power = lx * lx + ly * ly;
    if (s.lo_power > max_lo_power * (1.0 + 1e-12)) {
        const double phi_max = ps > 0 ? max_reachable_quadrature(detected_power, ps, max_lo_power)
                                      : 0.0;
        throw OutOfRange("quadrature " + fmt::num(target.degrees()) +
                             " deg unreachable; maximum reachable is " +
                             fmt::num(phi_max * constants::rad_to_deg) + " deg",
                         phi_max);
    }
    s.theta = s.lo_power > 0 ? std::atan2(ly, lx) : 0.0;
    return s;
}

/// Photon energy h c / lambda.
inline double photon_energy(double wavelength) {
    return constants::h_planck * constants::c_light / wavelength;
}

/// Analytic shot-noise level 2 h nu P of a photocurrent expressed in W^2/Hz.
inline double shot_noise_reference(double detected_power, double wavelength = 1064e-9) {
    if (!(detected_power > 0)) throw DomainError("detected power must be positive");
    return 2.0 * photon_energy(wavelength) * detected_power;
}

/// LO-only photocurrent in W: mean P plus white shot noise of single-sided PSD 2 h nu P.
inline std::vector<double> synthesize_shot_series(double detected_power, double wavelength, double fs,
                                                  std::size_t n_samples, std::uint64_t seed) {
    if (!(fs > 0)) throw DomainError("sample rate must be positive");
    const double sigma = std::sqrt(shot_noise_reference(detected_power, wavelength) * fs / 2.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> x(n_samples);
    for (double& v : x) v = detected_power + g(rng);
    return x;
}

/// Band-averaged Welch PSD of an LO-only record (W^2/Hz): the measured 0 dB level.
inline double shot_noise_reference(const std::vector<double>& lo_only, double fs,
                                   const WelchConfig& cfg, double f_lo, double f_hi) {
    const auto s = welch_auto(lo_only, fs, cfg);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 1; k < s.freq.size(); ++k) {
        if (s.freq[k] >= f_lo && s.freq[k] <= f_hi) {
            sum += s.s_a[k];
            ++n;
        }
    }
    if (n == 0) throw DataError("shot_noise_reference: no bins inside the band");
    return sum / double(n);
}

}  // namespace omsqz

#endif  // OMSQZ_HOMODYNE_HPP
