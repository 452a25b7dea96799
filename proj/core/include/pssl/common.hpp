#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace pssl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Malformed arguments: shape mismatches, out-of-range settings, degenerate batches.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or bound became NaN/Inf. Training never skips such a step.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Schema violations. Carries every offending key, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> keys);
  const std::vector<std::string>& keys() const { return keys_; }

 private:
  std::vector<std::string> keys_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

enum class Method { barlow, vicreg };
enum class Variant { deterministic, zprob, hprob };
enum class PriorKind { standard_normal, mog };

std::string to_string(Method m);
std::string to_string(Variant v);
std::string to_string(PriorKind p);
Method parse_method(const std::string& s);
Variant parse_variant(const std::string& s);
PriorKind parse_prior_kind(const std::string& s);

inline bool is_stochastic(Variant v) { return v != Variant::deterministic; }

}  // namespace pssl
