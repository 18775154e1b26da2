#pragma once

#include <stdexcept>
#include <string>

namespace qyoula {

// Base class for every failure reported by the library. Each subclass names
// one domain condition so callers (and the CLI exit-code mapping) can
// dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class SingularResolvent : public Error {
 public:
  using Error::Error;
};

class IllPosedInterconnection : public Error {
 public:
  using Error::Error;
};

class NotStable : public Error {
 public:
  using Error::Error;
};

class NotStrictlyProper : public Error {
 public:
  using Error::Error;
};

class InvalidSlh : public Error {
 public:
  using Error::Error;
};

class NotStabilizable : public Error {
 public:
  using Error::Error;
};

class NotDetectable : public Error {
 public:
  using Error::Error;
};

class PlacementFailed : public Error {
 public:
  using Error::Error;
};

class BezoutResidualTooLarge : public Error {
 public:
  using Error::Error;
};

class FactorUnstable : public Error {
 public:
  using Error::Error;
};

class FeedthroughSingular : public Error {
 public:
  using Error::Error;
};

class NotInYoulaRange : public Error {
 public:
  using Error::Error;
};

class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

// Malformed problem/parameter file. `where` carries "line:col (section)".
class ParseError : public Error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : Error(where + ": " + what), where_(where) {}
  [[nodiscard]] const std::string& where() const { return where_; }

 private:
  std::string where_;
};

}  // namespace qyoula
