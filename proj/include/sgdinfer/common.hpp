#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace sgdinfer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Errc {
  invalid_argument = 1,
  dimension_mismatch = 2,
  insufficient_data = 3,
  singular_matrix = 4,
  parse = 5,
  io = 6,
  data = 7,
};

/// Library error carrying a machine-readable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace sgdinfer
