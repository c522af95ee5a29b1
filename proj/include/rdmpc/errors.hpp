#pragma once

#include <stdexcept>
#include <string>

namespace rdmpc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IntegrationDiverged : Error { using Error::Error; };
struct MissingNeighborData : Error { using Error::Error; };
struct SocOutOfRange : Error { using Error::Error; };
struct InfeasibleChargePower : Error { using Error::Error; };
struct DerivativeFailure : Error { using Error::Error; };
struct IdentificationFailed : Error { using Error::Error; };
struct TreeTooLarge : Error { using Error::Error; };
struct AssemblyError : Error { using Error::Error; };
struct TopologyViolation : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace rdmpc
