#pragma once

#include <stdexcept>
#include <string>

namespace misclass {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- model validation ---
class RowNotStochastic : public Error { using Error::Error; };
class OutOfRange : public Error { using Error::Error; };
class NotSupported : public Error { using Error::Error; };
class DimensionMismatch : public Error { using Error::Error; };
class MissingStratum : public Error { using Error::Error; };
class EmptyCell : public Error { using Error::Error; };
class InvalidSensSpec : public Error { using Error::Error; };

// --- numerics ---
class NonFiniteInput : public Error { using Error::Error; };
class SingularSystem : public Error { using Error::Error; };
class NotConverged : public Error { using Error::Error; };
class HessianNotPD : public Error { using Error::Error; };
class SeparationSuspected : public Error { using Error::Error; };
class ZeroDenominator : public Error { using Error::Error; };

// --- sampling / aggregation ---
class AllWeightsDegenerate : public Error { using Error::Error; };
class TooManyFailedFits : public Error { using Error::Error; };
class TooLarge : public Error { using Error::Error; };
class SpecMismatch : public Error { using Error::Error; };

// --- I/O and configuration ---
class ParseError : public Error { using Error::Error; };
class MissingColumn : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

}  // namespace misclass
