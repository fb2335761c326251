#ifndef OMSQZ_ERROR_HPP
#define OMSQZ_ERROR_HPP

#include <stdexcept>
#include <string>

namespace omsqz {

/// Argument outside the mathematical domain of an operation (p <= 0 in dB, C >= 1, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Measured or ingested data that cannot be processed (non-finite values, short series).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched grids or shapes between objects that must agree.
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Homodyne phasors whose resultant vanishes.
class DegenerateGeometry : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Requested quadrature is not reachable with the available LO power.
class OutOfRange : public std::out_of_range {
public:
    OutOfRange(const std::string& what, double max_reachable)
        : std::out_of_range(what), max_reachable_(max_reachable) {}
    double max_reachable() const noexcept { return max_reachable_; }

private:
    double max_reachable_;
};

}  // namespace omsqz

#endif  // OMSQZ_ERROR_HPP
