#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "reachsec/model.hpp"
#include "reachsec/performance.hpp"

namespace reachsec {

using json = nlohmann::ordered_json;

struct HorizonPolicy {
  enum class Mode { Fixed, Eps };
  Mode mode = Mode::Eps;
  int fixed_k = 0;
  double eps = 1e-6;
};

struct RunConfig {
  PlantModel model;
  ModelDiagnostics model_diag;
  DetectorConfig detector;
  NoiseTruncation truncation;
  HorizonPolicy horizon;
  SolverConfig solver;
  std::optional<GainPair> gains;
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::string& ctx,
                                const std::set<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key()))
      throw std::invalid_argument("config." + ctx + ": unknown key '" + item.key() + "'");
  }
}

inline double number_at(const json& obj, const std::string& ctx, const std::string& key,
                        double fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw std::invalid_argument("config." + ctx + ": missing required key '" + key + "'");
    return fallback;
  }
  if (!obj.at(key).is_number())
    throw std::invalid_argument("config." + ctx + "." + key + ": expected a number");
  return obj.at(key).get<double>();
}

inline Eigen::MatrixXd matrix_at(const json& obj, const std::string& ctx, const std::string& key,
                                 Eigen::Index rows, Eigen::Index cols) {
  if (!obj.contains(key))
    throw std::invalid_argument("config." + ctx + ": missing required matrix '" + key + "'");
  const json& arr = obj.at(key);
  std::ostringstream where;
  where << "config." << ctx << "." << key;
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows)
    throw std::invalid_argument(where.str() + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = arr.at(r);
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument(where.str() + ": row " + std::to_string(r) + " must have " +
                                  std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row.at(c).is_number())
        throw std::invalid_argument(where.str() + ": non-numeric entry at (" + std::to_string(r) +
                                    ", " + std::to_string(c) + ")");
      out(r, c) = row.at(c).get<double>();
    }
  }
  return out;
}

}  // namespace detail

inline GainPair parse_gains(const json& obj, const PlantModel& m, const std::string& ctx) {
  detail::reject_unknown_keys(obj, ctx, {"L", "K"});
  GainPair g;
  g.L = detail::matrix_at(obj, ctx, "L", m.n(), m.p());
  g.K = detail::matrix_at(obj, ctx, "K", m.m(), m.n());
  return g;
}

inline RunConfig parse_config(const json& root) {
  detail::reject_unknown_keys(root, "<root>",
                              {"model", "detector", "truncation", "horizon", "solver", "gains"});
  if (!root.contains("model"))
    throw std::invalid_argument("config: missing required section 'model'");

  const json& jm = root.at("model");
  detail::reject_unknown_keys(jm, "model", {"n", "m", "p", "F", "G", "C", "R1", "R2"});
  const auto n = static_cast<Eigen::Index>(detail::number_at(jm, "model", "n", 0, true));
  const auto mdim = static_cast<Eigen::Index>(detail::number_at(jm, "model", "m", 0, true));
  const auto p = static_cast<Eigen::Index>(detail::number_at(jm, "model", "p", 0, true));
  if (n < 1 || mdim < 1 || p < 1)
    throw std::invalid_argument("config.model: n, m, p must be positive integers");

  RunConfig cfg;
  const Eigen::MatrixXd F = detail::matrix_at(jm, "model", "F", n, n);
  const Eigen::MatrixXd G = detail::matrix_at(jm, "model", "G", n, mdim);
  const Eigen::MatrixXd C = detail::matrix_at(jm, "model", "C", p, n);
  const Eigen::MatrixXd R1 = detail::matrix_at(jm, "model", "R1", n, n);
  const Eigen::MatrixXd R2 = detail::matrix_at(jm, "model", "R2", p, p);
  cfg.model = load_model(F, G, C, R1, R2, &cfg.model_diag);
  if (!cfg.model_diag.pass()) {
    std::ostringstream os;
    os << "config.model: invariant violations:";
    if (!cfg.model_diag.stable) os << " F unstable (rho = " << cfg.model_diag.rho_F << ");";
    if (!cfg.model_diag.detectable) os << " (F, C) not detectable;";
    if (!cfg.model_diag.stabilizable) os << " (F, G) not stabilizable;";
    if (!cfg.model_diag.covariances_ok)
      os << " covariance indefinite beyond tolerance (min eig R1 = "
         << cfg.model_diag.r1_min_eigenvalue << ", R2 = " << cfg.model_diag.r2_min_eigenvalue
         << ");";
    throw std::invalid_argument(os.str());
  }

  double far = 0.05;
  if (root.contains("detector")) {
    detail::reject_unknown_keys(root.at("detector"), "detector", {"false_alarm_rate"});
    far = detail::number_at(root.at("detector"), "detector", "false_alarm_rate", far);
  }
  cfg.detector = DetectorConfig::from_rate(static_cast<int>(p), far);

  double p_bar = 0.95;
  if (root.contains("truncation")) {
    detail::reject_unknown_keys(root.at("truncation"), "truncation", {"p_bar"});
    p_bar = detail::number_at(root.at("truncation"), "truncation", "p_bar", p_bar);
  }
  if (p_bar <= 0.0 || p_bar >= 1.0)
    throw std::invalid_argument("config.truncation.p_bar must lie in (0, 1)");
  cfg.truncation = NoiseTruncation::from_p_bar(static_cast<int>(n), static_cast<int>(p), p_bar);

  cfg.horizon.mode = HorizonPolicy::Mode::Eps;
  cfg.horizon.eps = 1e-6;
  if (root.contains("horizon")) {
    const json& jh = root.at("horizon");
    detail::reject_unknown_keys(jh, "horizon", {"fixed_k", "eps"});
    if (jh.contains("fixed_k") && jh.contains("eps"))
      throw std::invalid_argument("config.horizon: fixed_k and eps are mutually exclusive");
    if (jh.contains("fixed_k")) {
      cfg.horizon.mode = HorizonPolicy::Mode::Fixed;
      cfg.horizon.fixed_k = static_cast<int>(detail::number_at(jh, "horizon", "fixed_k", 0, true));
      if (cfg.horizon.fixed_k < 1)
        throw std::invalid_argument("config.horizon.fixed_k must be >= 1");
    } else if (jh.contains("eps")) {
      cfg.horizon.eps = detail::number_at(jh, "horizon", "eps", 1e-6, true);
      if (!(cfg.horizon.eps > 0.0))
        throw std::invalid_argument("config.horizon.eps must be positive");
    }
  }

  if (root.contains("solver")) {
    const json& js = root.at("solver");
    detail::reject_unknown_keys(js, "solver",
                                {"starts", "residual_tol", "max_iter", "seed"});
    cfg.solver.starts = static_cast<int>(detail::number_at(js, "solver", "starts", 64));
    cfg.solver.residual_tol = detail::number_at(js, "solver", "residual_tol", 1e-8);
    cfg.solver.max_iter = static_cast<int>(detail::number_at(js, "solver", "max_iter", 150));
    cfg.solver.seed =
        static_cast<std::uint64_t>(detail::number_at(js, "solver", "seed", 1));
    if (cfg.solver.starts < 1 || cfg.solver.max_iter < 1 || !(cfg.solver.residual_tol > 0.0))
      throw std::invalid_argument("config.solver: starts/max_iter/residual_tol out of range");
  }

  if (root.contains("gains")) cfg.gains = parse_gains(root.at("gains"), cfg.model, "gains");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config '" + path + "': expected an object");
  return parse_config(root);
}

inline GainPair load_gains_file(const std::string& path, const PlantModel& m) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("gains: cannot open '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("gains '" + path + "': " + e.what());
  }
  return parse_gains(root, m, "gains-file");
}

}  // namespace reachsec
