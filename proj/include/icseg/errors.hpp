#pragma once

#include <stdexcept>
#include <string>

namespace icseg {

// Exit codes used by the command-line front end.
enum class ExitCode : int { Ok = 0, Config = 2, Data = 3, Numerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Bad configuration, dimension mismatch, unknown keys, infeasible generator settings.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::Config, what) {}
};

// Malformed or inconsistent files and records.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::Data, what) {}
};

// A trajectory that does not replay against its scene.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(ExitCode::Data, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ExitCode::Numerical, what) {}
};

// Violated function precondition (e.g. entropy reward with M < 2).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace icseg
