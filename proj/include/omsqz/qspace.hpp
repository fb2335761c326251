#ifndef OMSQZ_QSPACE_HPP
#define OMSQZ_QSPACE_HPP

// Quadrature-space algebra for two-photon spectral matrices.
//
// Basis ordering is (amplitude, phase). A positive quadrature angle rotates
// from the amplitude quadrature toward the phase quadrature. Spectral
// densities are single-sided and normalized so that vacuum (shot noise) is
// the identity matrix.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "omsqz/constants.hpp"
#include "omsqz/error.hpp"

namespace omsqz {

using Complex = std::complex<double>;
using Matrix2c = Eigen::Matrix2cd;
using Vector2c = Eigen::Vector2cd;

/// A measurement axis in quadrature space, stored in [0, pi).
class QuadratureAngle {
public:
    constexpr QuadratureAngle() = default;
    explicit QuadratureAngle(double radians) : phi_(normalize(radians)) {}

    static QuadratureAngle from_degrees(double deg) {
        return QuadratureAngle(deg * constants::deg_to_rad);
    }

    double radians() const noexcept { return phi_; }
    double degrees() const noexcept { return phi_ * constants::rad_to_deg; }

    /// Same axis expressed in (-pi/2, pi/2].
    double signed_radians() const noexcept {
        return phi_ > constants::pi / 2 ? phi_ - constants::pi : phi_;
    }

    friend bool operator==(QuadratureAngle, QuadratureAngle) = default;

private:
    static double normalize(double x) {
        double r = std::fmod(x, constants::pi);
        if (r < 0) r += constants::pi;
        if (r >= constants::pi) r = 0.0;
        return r;
    }

    double phi_ = 0.0;
};

/// Strictly increasing list of positive sideband frequencies in Hz.
class FrequencyGrid {
public:
    FrequencyGrid() = default;

    explicit FrequencyGrid(std::vector<double> points) : points_(std::move(points)) {
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (!(points_[i] > 0) || !std::isfinite(points_[i]))
                throw DomainError("frequency grid points must be positive and finite");
            if (i > 0 && !(points_[i] > points_[i - 1]))
                throw DomainError("frequency grid must be strictly increasing");
        }
    }

    static FrequencyGrid linear(double start, double stop, std::size_t n) {
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i)
            p[i] = n == 1 ? start : start + (stop - start) * double(i) / double(n - 1);
        return FrequencyGrid(std::move(p));
    }

    static FrequencyGrid logarithmic(double start, double stop, std::size_t n) {
        if (!(start > 0) || !(stop > 0)) throw DomainError("log grid needs positive bounds");
        std::vector<double> p(n);
        const double a = std::log(start), b = std::log(stop);
        for (std::size_t i = 0; i < n; ++i)
            p[i] = n == 1 ? start : std::exp(a + (b - a) * double(i) / double(n - 1));
        p.front() = start;
        if (n > 1) p.back() = stop;
        return FrequencyGrid(std::move(p));
    }

    const std::vector<double>& points() const noexcept { return points_; }
    std::size_t size() const noexcept { return points_.size(); }
    double operator[](std::size_t i) const { return points_[i]; }
    auto begin() const noexcept { return points_.begin(); }
    auto end() const noexcept { return points_.end(); }

    friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;

private:
    std::vector<double> points_;
};

/// Quadrature PSD matrix at one sideband frequency.
struct SpectralMatrix {
    double freq = 0.0;
    Matrix2c m = Matrix2c::Identity();

    static SpectralMatrix identity(double freq = 0.0) { return {freq, Matrix2c::Identity()}; }

    static SpectralMatrix diagonal(double a, double b, double freq = 0.0) {
        Matrix2c m = Matrix2c::Zero();
        m(0, 0) = a;
        m(1, 1) = b;
        return {freq, m};
    }

    /// Hermitian (relative 1e-12) and positive semidefinite (eigenvalues >= -1e-12).
    bool valid() const {
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
        Eigen::SelfAdjointEigenSolver<Matrix2c> es(m, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() >= -1e-12 * scale;
    }
};

inline Eigen::Matrix2d rotation(double theta) {
    Eigen::Matrix2d r;
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

inline Eigen::Vector2d quadrature_vector(double phi) { return {std::cos(phi), std::sin(phi)}; }

/// R(theta) S R(theta)^T.
inline SpectralMatrix rotate(const SpectralMatrix& s, double theta) {
    const Matrix2c r = rotation(theta).cast<Complex>();
    return {s.freq, r * s.m * r.transpose()};
}

/// U(phi)^T S U(phi) for the real unit vector U = (cos phi, sin phi).
inline double project(const SpectralMatrix& s, double phi) {
    const double c = std::cos(phi), sn = std::sin(phi);
    return c * c * s.m(0, 0).real() + sn * sn * s.m(1, 1).real() +
           2.0 * c * sn * s.m(0, 1).real();
}

inline double project(const SpectralMatrix& s, QuadratureAngle phi) {
    return project(s, phi.radians());
}

struct ExtremalQuadratures {
    QuadratureAngle phi_min;
    double psd_min;
    QuadratureAngle phi_max;
    double psd_max;
};

// Real quadrature projections only see Re(S); the extremes are the
// eigenpairs of that symmetric part.
inline ExtremalQuadratures extremal_quadratures(const SpectralMatrix& s) {
    const double a = s.m(0, 0).real();
    const double d = s.m(1, 1).real();
    const double b = 0.5 * (s.m(0, 1).real() + s.m(1, 0).real());
    const double mean = 0.5 * (a + d);
    const double half_gap = std::hypot(0.5 * (a - d), b);
    const double lo = mean - half_gap;
    const double hi = mean + half_gap;
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
        return {QuadratureAngle(0.0), lo, QuadratureAngle(constants::pi / 2), hi};
    }
    const double phi_max = 0.5 * std::atan2(2.0 * b, a - d);
    return {QuadratureAngle(phi_max + constants::pi / 2), lo, QuadratureAngle(phi_max), hi};
}

inline double psd_to_db(double p) {
    if (!(p > 0)) throw DomainError("psd_to_db: PSD must be positive");
    return 10.0 * std::log10(p);
}

inline double db_to_psd(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace omsqz

#endif  // OMSQZ_QSPACE_HPP
