#pragma once

#include <stdexcept>
#include <string>

namespace otrecon {

// Violated precondition, shape mismatch, bad configuration. CLI exit code 1.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public ContractError {
public:
    explicit ConfigError(const std::string& msg) : ContractError(msg) {}
};

// Instance exceeds a hard size limit of an algorithm (e.g. the LP oracle).
class CapacityError : public ContractError {
public:
    explicit CapacityError(const std::string& msg) : ContractError(msg) {}
};

// Non-finite or zero denominators, diverged iterations. CLI exit code 2.
class NumericalBreakdown : public std::runtime_error {
public:
    explicit NumericalBreakdown(const std::string& msg) : std::runtime_error(msg) {}
};

// Network produced an output the loss cannot consume (e.g. nonpositive mass
// under the transport loss). The training loop skips and counts these.
class DegenerateOutput : public NumericalBreakdown {
public:
    explicit DegenerateOutput(const std::string& msg) : NumericalBreakdown(msg) {}
};

} // namespace otrecon
