#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace robust_enkf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Every library error carries a short machine-readable code; the CLI prints
// it as the first token of its one-line error report.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error("invalid-argument", what) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what)
      : Error("dimension-mismatch", what) {}
};

// A state became non-finite during time stepping. last_valid_time() is the
// last time at which every entry was finite.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double last_valid_time)
      : Error("blow-up", what), last_valid_time_(last_valid_time) {}

  double last_valid_time() const noexcept { return last_valid_time_; }

 private:
  double last_valid_time_;
};

class RankError : public Error {
 public:
  RankError(const std::string& what, Eigen::Index achievable_rank)
      : Error("rank-deficient", what), achievable_rank_(achievable_rank) {}

  Eigen::Index achievable_rank() const noexcept { return achievable_rank_; }

 private:
  Eigen::Index achievable_rank_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

inline bool all_finite(const Eigen::Ref<const Mat>& m) {
  return m.allFinite();
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected " +
                            std::to_string(want) + ", got " +
                            std::to_string(got));
  }
}

}  // namespace robust_enkf
