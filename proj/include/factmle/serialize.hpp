#pragma once

#include <string>

#include "json.hpp"

#include "factmle/blockdiag.hpp"
#include "factmle/data_io.hpp"
#include "factmle/model.hpp"
#include "factmle/solver.hpp"

namespace factmle {

/// {"psi": [...], "loadings": [[...]], "neg_loglik": v, "rank_used": k,
///  "r": r, "p": p}
nlohmann::json model_to_json(const FactorModel& model);

/// Diagonal-model schema plus "psi_blocks" and "blocks".
nlohmann::json block_model_to_json(const BlockModel& model,
                                   const BlockStructure& structure);

/// {"psi0": [...], "L0": [[...]], "seed": k}
nlohmann::json ground_truth_to_json(const GroundTruth& truth, std::uint64_t seed);

nlohmann::json trace_summary_to_json(const SolverTrace& trace);

std::string termination_name(Termination t);

}  // namespace factmle
