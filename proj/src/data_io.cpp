#include "factmle/data_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "factmle/errors.hpp"
#include "factmle/rng.hpp"

namespace factmle {

namespace {

void check_diagonal(const Eigen::VectorXd& d) {
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0)) {
      throw DomainError("covariance diagonal entry " + std::to_string(i) +
                        " is not strictly positive");
    }
  }
}

double parse_cell(const std::string& cell, Eigen::Index row, Eigen::Index col) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  // Trim ASCII whitespace and a possible UTF-8 BOM on the first cell.
  while (begin < end && (*begin == ' ' || *begin == '\t' || *begin == '\r')) ++begin;
  if (end - begin >= 3 && static_cast<unsigned char>(begin[0]) == 0xEF &&
      static_cast<unsigned char>(begin[1]) == 0xBB &&
      static_cast<unsigned char>(begin[2]) == 0xBF) {
    begin += 3;
  }
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;

  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw ParseError("non-numeric cell at row " + std::to_string(row + 1) +
                     ", column " + std::to_string(col + 1) + ": '" + cell + "'");
  }
  return value;
}

}  // namespace

CovarianceInput CovarianceInput::from_data(Eigen::MatrixXd x) {
  if (x.rows() < 1 || x.cols() < 1) {
    throw DomainError("data matrix must have at least one row and column");
  }
  CovarianceInput out;
  out.mode_ = InputMode::DataMatrix;
  out.p_ = x.cols();
  out.n_ = x.rows();

  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  out.x_ = std::move(x);

  const double inv_n = 1.0 / static_cast<double>(out.x_.rows());
  if (out.p_ <= kMaterializeLimit) {
    out.s_.noalias() = inv_n * (out.x_.transpose() * out.x_);
    out.s_ = 0.5 * (out.s_ + out.s_.transpose()).eval();
    out.diag_ = out.s_.diagonal();
  } else {
    out.diag_ = inv_n * out.x_.colwise().squaredNorm();
  }
  check_diagonal(out.diag_);
  return out;
}

CovarianceInput CovarianceInput::from_covariance(Eigen::MatrixXd s,
                                                 std::optional<Eigen::Index> n) {
  if (s.rows() != s.cols()) {
    throw DomainError("covariance matrix must be square, got " +
                      std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  }
  if (s.rows() < 1) throw DomainError("covariance matrix is empty");

  CovarianceInput out;
  out.mode_ = InputMode::CovarianceMatrix;
  out.p_ = s.rows();
  out.n_ = n;
  out.s_ = 0.5 * (s + s.transpose()).eval();
  out.diag_ = out.s_.diagonal();
  check_diagonal(out.diag_);
  return out;
}

const Eigen::MatrixXd& CovarianceInput::data() const {
  if (!has_data()) throw DomainError("no data matrix available for this input");
  return x_;
}

const Eigen::MatrixXd& CovarianceInput::covariance() const {
  if (!has_covariance()) {
    throw DomainError("covariance matrix not materialized (p > materialization limit)");
  }
  return s_;
}

Eigen::MatrixXd CovarianceInput::apply_covariance(
    const Eigen::Ref<const Eigen::MatrixXd>& v) const {
  if (has_covariance()) return s_ * v;
  const double inv_n = 1.0 / static_cast<double>(x_.rows());
  return inv_n * (x_.transpose() * (x_ * v));
}

Eigen::MatrixXd read_csv_matrix(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::string line;
  Eigen::Index ncols = -1;
  Eigen::Index lineno = 0;
  bool skipped_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (has_header && !skipped_header) {
      skipped_header = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      row.push_back(parse_cell(cell, lineno, static_cast<Eigen::Index>(row.size())));
    }
    if (!line.empty() && line.back() == ',') {
      throw ParseError("trailing comma at row " + std::to_string(lineno + 1));
    }
    if (ncols < 0) {
      ncols = static_cast<Eigen::Index>(row.size());
    } else if (static_cast<Eigen::Index>(row.size()) != ncols) {
      throw ParseError("ragged row " + std::to_string(lineno + 1) + ": expected " +
                       std::to_string(ncols) + " cells, got " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
    ++lineno;
  }
  if (rows.empty()) throw ParseError("no data rows in '" + path + "'");

  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), ncols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < ncols; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

CovarianceInput load_csv(const std::string& path, bool has_header, InputMode mode) {
  Eigen::MatrixXd m = read_csv_matrix(path, has_header);
  if (mode == InputMode::DataMatrix) return CovarianceInput::from_data(std::move(m));
  return CovarianceInput::from_covariance(std::move(m));
}

void save_csv(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      // %.17g round-trips every finite double exactly.
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf;
      if (j + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.p < 1 || spec.n < 1) throw DomainError("p and n must be positive");
  if (spec.r0 < 1 || spec.r0 >= spec.p) throw DomainError("require 1 <= r0 < p");
  if (!(spec.loading_var > 0.0)) throw DomainError("loading variance must be positive");
  if (!(spec.uniqueness_mean > 0.0)) throw DomainError("uniqueness mean must be positive");

  Rng rng(spec.seed);
  const double sd = std::sqrt(spec.loading_var);

  GroundTruth truth;
  truth.l0.resize(spec.p, spec.r0);
  for (Eigen::Index i = 0; i < spec.p; ++i) {
    for (Eigen::Index j = 0; j < spec.r0; ++j) {
      truth.l0(i, j) = rng.normal(spec.loading_mean, sd);
    }
  }
  truth.psi0.resize(spec.p);
  for (Eigen::Index i = 0; i < spec.p; ++i) {
    truth.psi0[i] = rng.exponential(spec.uniqueness_mean);
  }

  // Sampling through the factor representation x = L0 f + u gives
  // Cov(x) = L0 L0^T + Psi0 exactly, without a p x p Cholesky.
  Eigen::MatrixXd factors(spec.n, spec.r0);
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    for (Eigen::Index j = 0; j < spec.r0; ++j) factors(i, j) = rng.normal();
  }
  Eigen::MatrixXd x(spec.n, spec.p);
  x.noalias() = factors * truth.l0.transpose();
  const Eigen::VectorXd psi_sd = truth.psi0.cwiseSqrt();
  for (Eigen::Index i = 0; i < spec.n; ++i) {
    for (Eigen::Index j = 0; j < spec.p; ++j) x(i, j) += psi_sd[j] * rng.normal();
  }

  return SyntheticDataset{CovarianceInput::from_data(std::move(x)), std::move(truth)};
}

}  // namespace factmle
