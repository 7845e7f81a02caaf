#pragma once

#include <stdexcept>
#include <string>

namespace nhmech {

/// Error classes map one-to-one onto the CLI exit codes:
/// usage (2), input/file (3), numeric (4). Verdict failures are not
/// exceptions; they are carried by reports.
enum class ErrorClass { Usage, Input, Numeric };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const { return cls_; }

private:
  ErrorClass cls_;
};

/// Malformed expression source. `offset` is a byte offset into the source,
/// clamped to the last byte when the problem is at end of input.
class SyntaxError : public Error {
public:
  SyntaxError(const std::string& what, std::size_t offset)
      : Error(ErrorClass::Input, what + " (offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

class UnknownIdentifierError : public Error {
public:
  UnknownIdentifierError(const std::string& name, std::size_t offset)
      : Error(ErrorClass::Input,
              "unknown identifier '" + name + "' (offset " + std::to_string(offset) + ")"),
        name_(name), offset_(offset) {}
  const std::string& name() const { return name_; }
  std::size_t offset() const { return offset_; }

private:
  std::string name_;
  std::size_t offset_;
};

/// Evaluation left the function domain (log of non-positive, division by
/// zero, non-finite result). Never returned as a silent NaN/Inf.
class EvalDomainError : public Error {
public:
  EvalDomainError(const std::string& what, std::size_t offset)
      : Error(ErrorClass::Numeric, what + " (node offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

/// A regularity hypothesis failed numerically: singular fibre-metric block,
/// singular frame, condition number past its bound.
class RegularityError : public Error {
public:
  explicit RegularityError(const std::string& what) : Error(ErrorClass::Numeric, what) {}
};

/// An operation was called outside its contract (state off the constraint
/// set, field not normal to the distribution, defect condition violated).
class PreconditionError : public Error {
public:
  explicit PreconditionError(const std::string& what) : Error(ErrorClass::Usage, what) {}
};

/// Mechanical-only operation invoked on a general Lagrangian.
class UnsupportedOperationError : public Error {
public:
  explicit UnsupportedOperationError(const std::string& what) : Error(ErrorClass::Usage, what) {}
};

/// Scenario file problems: schema violations (reported with a JSON pointer),
/// embedded expression errors, rank failures at sampled points.
class ScenarioError : public Error {
public:
  explicit ScenarioError(const std::string& what) : Error(ErrorClass::Input, what) {}
};

} // namespace nhmech
