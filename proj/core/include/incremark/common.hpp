#pragma once

#include <compare>
#include <cstddef>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace incremark {

/// Index of a variable in the global numbering: network neurons first, then
/// auxiliary slack variables. See NeuronLayout for the exact order.
using VarId = std::size_t;

inline constexpr VarId kNoVar = std::numeric_limits<VarId>::max();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Numerical tolerances shared by every module.
inline constexpr double kEpsPivot = 1e-8;
inline constexpr double kEpsRow = 1e-7;
inline constexpr double kEpsBound = 1e-7;
inline constexpr double kEpsSat = 1e-6;

struct Interval {
  double lo = -kInf;
  double hi = kInf;

  bool contains(double v, double eps = 0.0) const { return v >= lo - eps && v <= hi + eps; }
  bool empty() const { return lo > hi; }
  double width() const { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class Sign { NonNeg, NonPos };

/// Sign assertion on a pre-activation neuron: x >= 0 or x <= 0.
struct Assertion {
  VarId neuron = kNoVar;
  Sign sign = Sign::NonNeg;

  Assertion complement() const {
    return {neuron, sign == Sign::NonNeg ? Sign::NonPos : Sign::NonNeg};
  }
  friend auto operator<=>(const Assertion&, const Assertion&) = default;
};

using AssertionSet = std::set<Assertion>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace incremark
