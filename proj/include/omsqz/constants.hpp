#ifndef OMSQZ_CONSTANTS_HPP
#define OMSQZ_CONSTANTS_HPP

#include <numbers>

namespace omsqz::constants {

inline constexpr double c_light = 299792458.0;        // m/s
inline constexpr double h_planck = 6.62607015e-34;    // J s
inline constexpr double hbar = h_planck / (2.0 * std::numbers::pi);
inline constexpr double k_boltzmann = 1.380649e-23;   // J/K
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double deg_to_rad = pi / 180.0;
inline constexpr double rad_to_deg = 180.0 / pi;

}  // namespace omsqz::constants

#endif  // OMSQZ_CONSTANTS_HPP
