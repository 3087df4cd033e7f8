// Python bindings for the factor-analysis solvers.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "factmle/blockdiag.hpp"
#include "factmle/data_io.hpp"
#include "factmle/em.hpp"
#include "factmle/errors.hpp"
#include "factmle/model.hpp"
#include "factmle/solver.hpp"
#include "factmle/spectra.hpp"
#include "factmle/variants.hpp"

namespace py = pybind11;
using namespace factmle;

namespace {

InitKind parse_init(const std::string& name) {
  if (name == "diag") return InitKind::FullDiagonal;
  if (name == "half-diag") return InitKind::HalfDiagonal;
  if (name == "random") return InitKind::UniformRandom;
  if (name == "warm") return InitKind::WarmStart;
  throw DomainError("unknown init '" + name + "'");
}

StopRule parse_stop(const std::string& name) {
  if (name == "objective") return StopRule::ObjectiveRelative;
  if (name == "iterate") return StopRule::IterateRelative;
  throw DomainError("unknown stop rule '" + name + "'");
}

SolverConfig make_config(int r, double eps, double tol, int max_iters,
                         const std::string& init, std::uint64_t seed,
                         const std::optional<Eigen::VectorXd>& warm_start,
                         const std::string& stop_rule) {
  SolverConfig config;
  config.r = r;
  config.eps = eps;
  config.tol = tol;
  config.max_iters = max_iters;
  config.seed = seed;
  config.stop_rule = parse_stop(stop_rule);
  if (warm_start) {
    config.init = InitKind::WarmStart;
    config.warm_start = *warm_start;
  } else {
    config.init = parse_init(init);
  }
  return config;
}

py::dict trace_dict(const SolverTrace& trace) {
  py::dict out;
  out["objectives"] = trace.objectives;
  out["step_norms"] = trace.step_norms;
  out["cum_seconds"] = trace.cum_seconds;
  out["iterations"] = trace.iterations;
  out["rho"] = trace.rho;
  out["termination"] = trace.termination == Termination::Converged ? "converged"
                       : trace.termination == Termination::MaxIters ? "max_iters"
                                                                    : "stalled";
  return out;
}

py::dict model_dict(const FactorModel& model) {
  py::dict out;
  out["psi"] = model.psi;
  out["loadings"] = model.loadings;
  out["neg_loglik"] = model.neg_loglik;
  out["rank_used"] = model.rank_used;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Maximum-likelihood factor analysis via difference-of-convex programming";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception<CertificationFailure>(m, "CertificationFailure",
                                               PyExc_RuntimeError);

  py::class_<CovarianceInput>(m, "CovarianceInput")
      .def_static("from_data", &CovarianceInput::from_data, py::arg("x"),
                  "Build from an n x p data matrix (columns are mean-centered).")
      .def_static(
          "from_covariance",
          [](Eigen::MatrixXd s) { return CovarianceInput::from_covariance(std::move(s)); },
          py::arg("s"))
      .def_property_readonly("p", &CovarianceInput::p)
      .def_property_readonly("n",
                             [](const CovarianceInput& cov) -> py::object {
                               if (cov.sample_count()) return py::int_(*cov.sample_count());
                               return py::none();
                             })
      .def_property_readonly("diagonal", &CovarianceInput::diagonal);

  m.def(
      "load_csv",
      [](const std::string& path, bool header, const std::string& kind) {
        if (kind != "data" && kind != "cov") throw DomainError("kind must be data|cov");
        return load_csv(path, header,
                        kind == "data" ? InputMode::DataMatrix
                                       : InputMode::CovarianceMatrix);
      },
      py::arg("path"), py::arg("header") = false, py::arg("kind") = "data");

  m.def(
      "generate_synthetic",
      [](Eigen::Index p, Eigen::Index n, Eigen::Index r0, double mu, double sigma2,
         double uniq_mean, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.p = p;
        spec.n = n;
        spec.r0 = r0;
        spec.loading_mean = mu;
        spec.loading_var = sigma2;
        spec.uniqueness_mean = uniq_mean;
        spec.seed = seed;
        SyntheticDataset data = generate_synthetic(spec);
        py::dict truth;
        truth["psi0"] = data.truth.psi0;
        truth["L0"] = data.truth.l0;
        return py::make_tuple(std::move(data.cov), truth);
      },
      py::arg("p"), py::arg("n"), py::arg("r0"), py::arg("mu") = 10.0,
      py::arg("sigma2") = 1.0, py::arg("uniq_mean") = 10.0, py::arg("seed") = 0);

  m.def(
      "solve",
      [](const CovarianceInput& cov, int r, double eps, double tol, int max_iters,
         const std::string& init, std::uint64_t seed,
         const std::optional<Eigen::VectorXd>& warm_start,
         const std::string& stop_rule) {
        const auto config =
            make_config(r, eps, tol, max_iters, init, seed, warm_start, stop_rule);
        auto [phi, trace] = solve(cov, config);
        const FactorModel model = recover_loadings(cov, phi, r);
        py::dict out = model_dict(model);
        out["phi"] = phi.phi;
        out["trace"] = trace_dict(trace);
        return out;
      },
      py::arg("cov"), py::arg("r"), py::arg("eps") = 1e-7, py::arg("tol") = 1e-8,
      py::arg("max_iters") = 2000, py::arg("init") = "diag", py::arg("seed") = 0,
      py::arg("warm_start") = py::none(), py::arg("stop_rule") = "objective",
      "Run the DC iteration and recover the fitted factor model.");

  m.def(
      "solve_ridge",
      [](const CovarianceInput& cov, int r, double gamma, double tol, int max_iters,
         const std::string& init, std::uint64_t seed,
         const std::optional<Eigen::VectorXd>& warm_start,
         const std::string& stop_rule) {
        RidgeConfig config;
        config.r = r;
        config.gamma = gamma;
        config.tol = tol;
        config.max_iters = max_iters;
        config.seed = seed;
        config.stop_rule = parse_stop(stop_rule);
        if (warm_start) {
          config.init = InitKind::WarmStart;
          config.warm_start = *warm_start;
        } else {
          config.init = parse_init(init);
        }
        auto [phi, trace] = solve_ridge(cov, config);
        const FactorModel model = recover_loadings(cov, phi, r);
        py::dict out = model_dict(model);
        out["phi"] = phi.phi;
        out["trace"] = trace_dict(trace);
        return out;
      },
      py::arg("cov"), py::arg("r"), py::arg("gamma"), py::arg("tol") = 1e-8,
      py::arg("max_iters") = 2000, py::arg("init") = "diag", py::arg("seed") = 0,
      py::arg("warm_start") = py::none(), py::arg("stop_rule") = "objective");

  m.def(
      "solve_continuation",
      [](const CovarianceInput& cov, int r, const std::vector<double>& eps_schedule,
         double tol, int max_iters, const std::string& init, std::uint64_t seed) {
        SolverConfig config;
        config.r = r;
        config.tol = tol;
        config.max_iters = max_iters;
        config.seed = seed;
        config.init = parse_init(init);
        ContinuationConfig cc;
        if (!eps_schedule.empty()) cc.eps_schedule = eps_schedule;
        ContinuationResult res = solve_continuation(cov, config, cc);
        const FactorModel model = recover_loadings(cov, res.phi, r);
        py::dict out = model_dict(model);
        out["phi"] = res.phi.phi;
        out["pinned"] = res.pinned;
        out["trace"] = trace_dict(res.trace);
        out["step_final_objectives"] = res.step_final_objectives;
        return out;
      },
      py::arg("cov"), py::arg("r"), py::arg("eps_schedule") = std::vector<double>{},
      py::arg("tol") = 1e-8, py::arg("max_iters") = 2000, py::arg("init") = "diag",
      py::arg("seed") = 0);

  m.def(
      "solve_path",
      [](const CovarianceInput& cov, const std::vector<int>& ranks, double eps,
         double tol, int max_iters, const std::string& init, std::uint64_t seed) {
        SolverConfig config;
        config.eps = eps;
        config.tol = tol;
        config.max_iters = max_iters;
        config.seed = seed;
        config.init = parse_init(init);
        config.r = ranks.empty() ? 1 : ranks.front();
        const auto path = solve_path(cov, ranks, config);
        py::list out;
        for (const auto& entry : path) {
          py::dict item = model_dict(entry.model);
          item["r"] = entry.rank;
          item["phi"] = entry.phi.phi;
          item["objective"] = entry.trace.objectives.back();
          item["trace"] = trace_dict(entry.trace);
          out.append(std::move(item));
        }
        return out;
      },
      py::arg("cov"), py::arg("ranks"), py::arg("eps") = 1e-7, py::arg("tol") = 1e-8,
      py::arg("max_iters") = 2000, py::arg("init") = "diag", py::arg("seed") = 0);

  m.def(
      "solve_em",
      [](const CovarianceInput& cov, int r, double tol, int max_iters,
         double psi_floor) {
        EmConfig config;
        config.r = r;
        config.tol = tol;
        config.max_iters = max_iters;
        config.psi_floor = psi_floor;
        auto [model, trace] = solve_em(cov, config);
        py::dict out = model_dict(model);
        out["trace"] = trace_dict(trace);
        return out;
      },
      py::arg("cov"), py::arg("r"), py::arg("tol") = 1e-8, py::arg("max_iters") = 2000,
      py::arg("psi_floor") = 1e-10);

  m.def(
      "solve_block",
      [](const CovarianceInput& cov, const std::vector<int>& sizes, int r, double tol,
         int max_iters) {
        BlockStructure structure{sizes};
        BlockSolverConfig config;
        config.r = r;
        config.tol = tol;
        config.max_iters = max_iters;
        auto [phi, trace] = solve_block(cov, structure, config);
        const BlockModel model = recover_block_model(cov, structure, phi, r);
        py::dict out;
        out["psi_blocks"] = model.psi_blocks;
        out["loadings"] = model.loadings;
        out["neg_loglik"] = model.neg_loglik;
        out["rank_used"] = model.rank_used;
        out["phi_blocks"] = phi.blocks;
        out["trace"] = trace_dict(trace);
        return out;
      },
      py::arg("cov"), py::arg("blocks"), py::arg("r"), py::arg("tol") = 1e-8,
      py::arg("max_iters") = 2000);

  m.def(
      "objective",
      [](const CovarianceInput& cov, const Eigen::VectorXd& phi, int r, double eps) {
        const ObjectiveValue v = objective(cov, UniquenessPrecision{phi, eps}, r);
        py::dict out;
        out["f"] = v.f;
        out["f1"] = v.f1;
        out["f2"] = v.f2;
        out["lambda_star"] = v.lambda_star;
        return out;
      },
      py::arg("cov"), py::arg("phi"), py::arg("r"), py::arg("eps") = 1e-7);

  m.def(
      "eig_top",
      [](const CovarianceInput& cov, const Eigen::VectorXd& phi, int r,
         const std::string& strategy) {
        SpectrumStrategy s = SpectrumStrategy::Auto;
        if (strategy == "dense") s = SpectrumStrategy::DenseFull;
        else if (strategy == "gram") s = SpectrumStrategy::GramThin;
        else if (strategy == "iterative") s = SpectrumStrategy::IterativeLowRank;
        else if (strategy != "auto") throw DomainError("unknown strategy");
        const ScaledSpectrum sp = eig_top(cov, phi, r, s);
        return py::make_tuple(sp.eigenvalues, sp.vectors);
      },
      py::arg("cov"), py::arg("phi"), py::arg("r"), py::arg("strategy") = "auto");

  m.def(
      "neg_loglik",
      [](const CovarianceInput& cov, const Eigen::VectorXd& psi,
         const Eigen::MatrixXd& loadings) {
        FactorModel model;
        model.psi = psi;
        model.loadings = loadings;
        return neg_loglik(cov, model);
      },
      py::arg("cov"), py::arg("psi"), py::arg("loadings"));
}
