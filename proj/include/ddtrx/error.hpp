#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ddtrx {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A tree violates its structural invariants.
class StructureError : public Error {
 public:
  using Error::Error;
};

// An argument falls outside the domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class SingularCovarianceError : public Error {
 public:
  SingularCovarianceError(const std::string& leaf_a, const std::string& leaf_b)
      : Error("covariance is not positive definite (leaves '" + leaf_a + "' and '" + leaf_b +
              "' are indistinguishable)"),
        leaf_a_(leaf_a),
        leaf_b_(leaf_b) {}

  const std::string& leaf_a() const { return leaf_a_; }
  const std::string& leaf_b() const { return leaf_b_; }

 private:
  std::string leaf_a_;
  std::string leaf_b_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// ABC kernel weights all vanished; the caller has to raise d or N^syn.
class DegenerateKernelError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// A quantity cannot be represented at double precision.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ddtrx
