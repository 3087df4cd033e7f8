#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

namespace factmle {

enum class InputMode { DataMatrix, CovarianceMatrix };

/// Covariance information backing a fit: either a mean-centered data
/// matrix X (n x p) with S = (1/n) X^T X, or the covariance matrix S
/// itself.
///
/// The p x p matrix S is materialized only when it is affordable
/// (p <= kMaterializeLimit) or when it is the authoritative input;
/// otherwise only X is stored and products with S are formed through the
/// Gram identity S v = X^T (X v) / n. The diagonal of S is always kept.
class CovarianceInput {
 public:
  static constexpr Eigen::Index kMaterializeLimit = 4096;

  /// Builds from raw observations (rows = samples). Columns are centered
  /// with the sample mean, matching S = (1/n) X^T X.
  static CovarianceInput from_data(Eigen::MatrixXd x);

  /// Builds from a covariance matrix; symmetrizes and validates the
  /// diagonal. The sample count may be unknown.
  static CovarianceInput from_covariance(
      Eigen::MatrixXd s, std::optional<Eigen::Index> n = std::nullopt);

  InputMode mode() const { return mode_; }
  Eigen::Index p() const { return p_; }

  /// Sample count; empty when the input was a covariance matrix without
  /// one.
  std::optional<Eigen::Index> sample_count() const { return n_; }

  bool has_data() const { return x_.size() > 0; }
  bool has_covariance() const { return s_.size() > 0; }

  const Eigen::MatrixXd& data() const;
  const Eigen::MatrixXd& covariance() const;

  /// diag(S), available in every representation.
  const Eigen::VectorXd& diagonal() const { return diag_; }

  /// Y = S * V without requiring S to be materialized.
  Eigen::MatrixXd apply_covariance(const Eigen::Ref<const Eigen::MatrixXd>& v) const;

 private:
  CovarianceInput() = default;

  InputMode mode_ = InputMode::DataMatrix;
  Eigen::MatrixXd x_;  // n x p, centered; empty in covariance mode
  Eigen::MatrixXd s_;  // p x p; empty when not materialized
  Eigen::VectorXd diag_;
  std::optional<Eigen::Index> n_;
  Eigen::Index p_ = 0;
};

/// Parameters of a synthetic factor-model dataset: loadings are iid
/// Normal(loading_mean, loading_var), unique variances iid Exponential
/// with mean uniqueness_mean, and rows of X iid N(0, Psi0 + L0 L0^T).
struct SyntheticSpec {
  Eigen::Index p = 0;
  Eigen::Index n = 0;
  Eigen::Index r0 = 0;
  double loading_mean = 10.0;
  double loading_var = 1.0;
  double uniqueness_mean = 10.0;
  std::uint64_t seed = 0;
};

struct GroundTruth {
  Eigen::VectorXd psi0;  // length p
  Eigen::MatrixXd l0;    // p x r0
};

struct SyntheticDataset {
  CovarianceInput cov;
  GroundTruth truth;
};

/// Reads a rectangular numeric CSV (comma separator, '.' decimal point,
/// optional single header row, UTF-8).
CovarianceInput load_csv(const std::string& path, bool has_header, InputMode mode);

/// Parses CSV content into a dense matrix. Throws ParseError on ragged
/// rows or non-numeric cells.
Eigen::MatrixXd read_csv_matrix(const std::string& path, bool has_header);

/// Writes a matrix as CSV with enough digits for an exact double
/// round-trip.
void save_csv(const Eigen::MatrixXd& m, const std::string& path);

/// Draws a dataset according to spec; deterministic given spec.seed.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace factmle
