#pragma once

#include <stdexcept>
#include <string>

namespace gridshield {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Plant / controller preconditions.
class SpeedNearZero : public Error { using Error::Error; };
class GainTooSmall : public Error { using Error::Error; };
class SocOutOfRange : public Error { using Error::Error; };
class DcVoltageCollapse : public Error { using Error::Error; };
class BusVoltageCollapse : public Error { using Error::Error; };

// Energy management.
class ConfigInvalid : public Error { using Error::Error; };
class InfeasibleDemand : public Error { using Error::Error; };

// Simulation.
class NumericalDivergence : public Error { using Error::Error; };
class EmptyWindow : public Error { using Error::Error; };

// Scenario files.
class ParseError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };

}  // namespace gridshield
