#pragma once

#include <stdexcept>
#include <string>

namespace lmdrop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input and schema problems.
class GapError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };

// Numerical failures during evaluation or fitting.
class NumericalError : public Error { using Error::Error; };
class RankError : public Error { using Error::Error; };
class SeparationError : public Error { using Error::Error; };
class DegenerateStateError : public Error { using Error::Error; };
class MonotonicityError : public Error { using Error::Error; };
class FitError : public Error { using Error::Error; };
class NestingViolationError : public Error { using Error::Error; };
class ExplosionError : public Error { using Error::Error; };

}  // namespace lmdrop
