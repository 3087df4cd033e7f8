#include "factmle/serialize.hpp"

namespace factmle {

namespace {

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

nlohmann::json model_to_json(const FactorModel& model) {
  return nlohmann::json{{"psi", vector_to_json(model.psi)},
                        {"loadings", matrix_to_json(model.loadings)},
                        {"neg_loglik", model.neg_loglik},
                        {"rank_used", model.rank_used},
                        {"r", model.loadings.cols()},
                        {"p", model.psi.size()}};
}

nlohmann::json block_model_to_json(const BlockModel& model,
                                   const BlockStructure& structure) {
  Eigen::Index p = 0;
  for (const auto& b : model.psi_blocks) p += b.rows();
  Eigen::VectorXd psi_diag(p);
  {
    Eigen::Index o = 0;
    for (const auto& b : model.psi_blocks) {
      psi_diag.segment(o, b.rows()) = b.diagonal();
      o += b.rows();
    }
  }
  nlohmann::json psi_blocks = nlohmann::json::array();
  for (const auto& b : model.psi_blocks) psi_blocks.push_back(matrix_to_json(b));

  return nlohmann::json{{"psi", vector_to_json(psi_diag)},
                        {"psi_blocks", std::move(psi_blocks)},
                        {"blocks", structure.sizes},
                        {"loadings", matrix_to_json(model.loadings)},
                        {"neg_loglik", model.neg_loglik},
                        {"rank_used", model.rank_used},
                        {"r", model.loadings.cols()},
                        {"p", p}};
}

nlohmann::json ground_truth_to_json(const GroundTruth& truth, std::uint64_t seed) {
  return nlohmann::json{{"psi0", vector_to_json(truth.psi0)},
                        {"L0", matrix_to_json(truth.l0)},
                        {"seed", seed}};
}

nlohmann::json trace_summary_to_json(const SolverTrace& trace) {
  return nlohmann::json{
      {"iterations", trace.iterations},
      {"termination", termination_name(trace.termination)},
      {"objective", trace.objectives.empty() ? 0.0 : trace.objectives.back()},
      {"wall_seconds", trace.cum_seconds.empty() ? 0.0 : trace.cum_seconds.back()}};
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::Converged:
      return "converged";
    case Termination::MaxIters:
      return "max_iters";
    case Termination::Stalled:
      return "stalled";
  }
  return "unknown";
}

}  // namespace factmle
