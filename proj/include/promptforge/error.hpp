#pragma once

#include <stdexcept>
#include <string>

namespace promptforge {

// Caller broke a documented precondition (shape mismatch, bad argument).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input data or configuration failed validation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A non-finite value appeared during evaluation.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(const std::string& node, const std::string& what)
      : std::runtime_error("numeric fault at " + node + ": " + what), node_(node) {}
  const std::string& node() const noexcept { return node_; }

 private:
  std::string node_;
};

// A pretraining calibration gate was not met.
class GateFailure : public std::runtime_error {
 public:
  GateFailure(std::string gate, const std::string& detail)
      : std::runtime_error("calibration gate '" + gate + "' failed: " + detail),
        gate_(std::move(gate)) {}
  const std::string& gate() const noexcept { return gate_; }

 private:
  std::string gate_;
};

}  // namespace promptforge
