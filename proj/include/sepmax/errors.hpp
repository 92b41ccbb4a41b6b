#ifndef SEPMAX_ERRORS_HPP
#define SEPMAX_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sepmax {

/// Base class for all errors thrown by the library.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration: bad flag value, incompatible shapes requested, etc.
struct config_error : error {
    explicit config_error(const std::string& msg) : error(msg) {}
};

/// Data I/O failure: unreadable file, wrong magic, truncated stream,
/// inconsistent record counts.
struct data_error : error {
    explicit data_error(const std::string& msg) : error(msg) {}
};

/// A documented operation precondition does not hold (singleton class,
/// Q < 2, asymmetric matrix, ...).
struct precondition_error : error {
    explicit precondition_error(const std::string& msg) : error(msg) {}
};

/// Numerical failure: singular system, diverging optimization.
struct numeric_error : error {
    explicit numeric_error(const std::string& msg) : error(msg) {}
};

} // namespace sepmax

#endif
