#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reachsec/config.hpp"
#include "reachsec/version.hpp"

namespace reachsec {

/// All numeric output is carried at 12 significant digits so downstream
/// oracle checks have more than display precision.
inline double round_sig12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::strtod(buf, nullptr);
}

inline std::string format_sig12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline json json_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(round_sig12(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json json_vector(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(round_sig12(v(i)));
  return out;
}

/// Resolved-config echo written into every envelope: all defaults applied, so
/// a run is reproducible from its own output header.
inline json resolved_config_json(const RunConfig& cfg) {
  json j;
  j["model"] = {{"n", cfg.model.n()}, {"m", cfg.model.m()},      {"p", cfg.model.p()},
                {"F", json_matrix(cfg.model.F)},
                {"G", json_matrix(cfg.model.G)},
                {"C", json_matrix(cfg.model.C)},
                {"R1", json_matrix(cfg.model.R1)},
                {"R2", json_matrix(cfg.model.R2)}};
  j["detector"] = {{"false_alarm_rate", round_sig12(cfg.detector.false_alarm_rate)},
                   {"alpha", round_sig12(cfg.detector.alpha)}};
  j["truncation"] = {{"p_bar", round_sig12(cfg.truncation.p_bar)},
                     {"nu_bar", round_sig12(cfg.truncation.nu_bar)},
                     {"eta_bar", round_sig12(cfg.truncation.eta_bar)}};
  if (cfg.horizon.mode == HorizonPolicy::Mode::Fixed)
    j["horizon"] = {{"fixed_k", cfg.horizon.fixed_k}};
  else
    j["horizon"] = {{"eps", round_sig12(cfg.horizon.eps)}};
  j["solver"] = {{"starts", cfg.solver.starts},
                 {"residual_tol", round_sig12(cfg.solver.residual_tol)},
                 {"max_iter", cfg.solver.max_iter},
                 {"seed", cfg.solver.seed}};
  if (cfg.gains)
    j["gains"] = {{"L", json_matrix(cfg.gains->L)}, {"K", json_matrix(cfg.gains->K)}};
  return j;
}

inline json make_envelope(const std::string& command, const RunConfig& cfg,
                          const std::vector<std::string>& warnings, json payload) {
  json env;
  env["artifact"] = {{"name", kArtifactName}, {"version", kArtifactVersion}};
  env["command"] = command;
  env["config"] = resolved_config_json(cfg);
  env["warnings"] = warnings;
  env["payload"] = std::move(payload);
  return env;
}

/// Minimal CSV writer; numeric cells at 12 significant digits.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::invalid_argument("csv: cannot open '" + path + "' for writing");
  }

  void header(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) out_ << ',';
      out_ << names[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_sig12(values[i]);
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace reachsec
