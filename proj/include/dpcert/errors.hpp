#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpcert {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the byte offset into the source.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation left the real domain (log of a negative, division by zero, NaN, ...).
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::size_t offset)
      : Error(what + " (node at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Derivative requested exactly at a non-differentiable point of a node.
class KinkError : public Error {
 public:
  KinkError(const std::string& what, std::size_t offset)
      : Error(what + " (node at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Point violates a constraint beyond the feasibility slack.
class InfeasiblePoint : public Error {
 public:
  InfeasiblePoint(std::size_t constraint, double value)
      : Error("point is infeasible: constraint " + std::to_string(constraint + 1) +
              " has value " + std::to_string(value)),
        constraint_(constraint) {}
  std::size_t constraint() const noexcept { return constraint_; }

 private:
  std::size_t constraint_;
};

/// Simplex hit its iteration cap.
class SolverStalled : public Error {
 public:
  using Error::Error;
};

/// A probe could not gather enough usable samples to decide anything.
class Inconclusive : public Error {
 public:
  using Error::Error;
};

/// Bad input data (problem file, point, config values).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpcert
