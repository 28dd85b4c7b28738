#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pggr/config.hpp"

namespace pggr {

constexpr int kSchemaVersion = 1;
using Json = nlohmann::ordered_json;

// JSON has no inf/nan literals; non-finite values become null
inline Json jnum(double v) { return std::isfinite(v) ? Json(v) : Json(); }

inline Json to_json(const VmfnmComponent& c) {
  Json j;
  j["weight"] = c.weight;
  j["mu"] = std::vector<double>(c.mu.data(), c.mu.data() + c.mu.size());
  j["kappa"] = c.kappa;
  j["m"] = c.m;
  j["omega"] = c.omega;
  return j;
}

inline Json to_json(const MixtureParams& p) {
  Json j;
  j["dim"] = p.dim;
  Json comps = Json::array();
  for (const auto& c : p.comps) comps.push_back(to_json(c));
  j["components"] = comps;
  return j;
}

inline Json to_json(const Mlp& net) {
  Json j;
  j["widths"] = net.widths;
  j["n_enc"] = net.n_enc;
  j["lambda"] = net.lambda;
  Json layers = Json::array();
  for (size_t l = 0; l < net.W.size(); ++l) {
    Json layer;
    layer["rows"] = net.W[l].rows();
    layer["cols"] = net.W[l].cols();
    layer["w"] = std::vector<double>(net.W[l].data(), net.W[l].data() + net.W[l].size());
    layer["b"] = std::vector<double>(net.b[l].data(), net.b[l].data() + net.b[l].size());
    layers.push_back(layer);
  }
  j["layers"] = layers;
  return j;
}

inline Json to_json(const RunResult& r, bool include_net = false) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["estimate"] = r.estimate;
  j["k_ad"] = r.k_ad;
  j["g_evals"] = r.g_evals;
  j["unamortized_cost"] = r.unamortized_cost;
  j["stopped_early"] = r.stopped_early;
  j["sigma_traj"] = r.sigma_traj;
  j["delta_w_traj"] = r.delta_w_traj;
  Json ds = Json::array();
  for (double v : r.delta_star_traj) ds.push_back(jnum(v));
  j["delta_star_traj"] = ds;
  j["final_lr_mean"] = jnum(r.final_lr_mean);
  j["wall_seconds"] = r.wall_seconds;
  if (r.proposal.dim > 0) j["proposal"] = to_json(r.proposal);
  if (include_net && r.net) j["net"] = to_json(*r.net);
  return j;
}

// wall-clock fields live in a separate record so summary.json stays
// byte-identical across repeated seeded invocations
inline Json to_json(const ExperimentSummary& s, std::uint64_t config_hash) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["config_hash"] = strfmt("%016llx", (unsigned long long)config_hash);
  j["problem"] = s.problem;
  j["method"] = s.method;
  j["n_rep"] = s.n_rep;
  j["base_seed"] = s.base_seed;
  j["mean_estimate"] = s.mean_estimate;
  j["cov"] = jnum(s.cov);
  if (s.has_reference) {
    j["reference"] = s.reference;
    j["rel_error"] = s.rel_error;
  }
  j["n_g"] = s.n_g;
  j["mean_k_ad"] = s.mean_k_ad;
  j["failures"] = s.failures;
  j["failure_messages"] = s.failure_messages;
  j["estimates"] = s.estimates;
  Json seeds = Json::array(), kads = Json::array(), costs = Json::array();
  for (const auto& r : s.runs) {
    seeds.push_back(r.seed);
    kads.push_back(r.k_ad);
    costs.push_back(r.unamortized_cost);
  }
  j["seeds"] = seeds;
  j["k_ads"] = kads;
  j["unamortized_costs"] = costs;
  return j;
}

namespace iodetail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  PGGR_REQUIRE(bool(out), strfmt("cannot write '%s'", path.string().c_str()));
  out << text;
}

}  // namespace iodetail

// per-run stage trace: selected smoothing level, achieved weight CoV, and
// stopping diagnostic per adaptive stage (stage 0 is the initialization)
inline std::string trace_csv(const RunResult& r) {
  std::ostringstream o;
  o << "stage,sigma_selected,delta_w,delta_star\n";
  for (size_t t = 0; t + 1 < r.sigma_traj.size(); ++t) {
    o << t << "," << strfmt("%.17g", r.sigma_traj[t + 1]) << ",";
    if (t < r.delta_w_traj.size()) o << strfmt("%.17g", r.delta_w_traj[t]);
    o << ",";
    if (t >= 1 && t - 1 < r.delta_star_traj.size()) {
      double v = r.delta_star_traj[t - 1];
      o << (std::isfinite(v) ? strfmt("%.17g", v) : "inf");
    }
    o << "\n";
  }
  return o.str();
}

// one presentation row: method, cost, estimate, rel. error, CoV (3 sig digits)
inline std::string table_row(const ExperimentSummary& s) {
  std::string eps = s.has_reference ? sci3(s.rel_error) : "-";
  std::string cov = std::isfinite(s.cov) ? sci3(s.cov) : "-";
  return strfmt("%-10s %-12s %-12s %-10s %-10s", s.method.c_str(), sci3(s.n_g).c_str(),
                sci3(s.mean_estimate).c_str(), eps.c_str(), cov.c_str());
}

inline std::string table_header() {
  return strfmt("%-10s %-12s %-12s %-10s %-10s", "method", "N_g", "mean_P", "eps_rel", "cov");
}

// full artifact set for one summary: summary.json, timing.json, per-run
// records and stage traces under runs/
inline void write_summary_artifacts(const std::filesystem::path& dir,
                                    const ExperimentSummary& s,
                                    const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "runs");
  iodetail::write_text(dir / "config.used", cfg.canonical_text());
  iodetail::write_text(dir / "summary.json", to_json(s, cfg.hash()).dump(2) + "\n");
  Json timing;
  timing["schema_version"] = kSchemaVersion;
  timing["config_hash"] = strfmt("%016llx", (unsigned long long)cfg.hash());
  timing["wall_total"] = s.wall_total;
  timing["wall_mean"] = s.wall_mean;
  iodetail::write_text(dir / "timing.json", timing.dump(2) + "\n");
  for (const auto& r : s.runs) {
    Json j = to_json(r, cfg.ice.store_traces);
    j["config_hash"] = strfmt("%016llx", (unsigned long long)cfg.hash());
    iodetail::write_text(dir / "runs" / strfmt("run_seed%llu.json", (unsigned long long)r.seed),
                         j.dump(2) + "\n");
    if (r.method != "cmc")
      iodetail::write_text(
          dir / strfmt("trace_%s_seed%llu.csv", r.method.c_str(), (unsigned long long)r.seed),
          trace_csv(r));
  }
}

// sweep CSV with full-precision numeric columns (re-parse round-trips)
inline std::string sweep_csv(const std::string& param, const std::vector<double>& values,
                             const std::vector<ExperimentSummary>& sums) {
  PGGR_REQUIRE(values.size() == sums.size(), "sweep values/summaries mismatch");
  std::ostringstream o;
  o << param << ",mean_estimate,cov,rel_error,n_g\n";
  for (size_t i = 0; i < values.size(); ++i) {
    const auto& s = sums[i];
    o << strfmt("%.17g", values[i]) << "," << strfmt("%.17g", s.mean_estimate) << ","
      << strfmt("%.17g", s.cov) << ","
      << (s.has_reference ? strfmt("%.17g", s.rel_error) : std::string("")) << ","
      << strfmt("%.17g", s.n_g) << "\n";
  }
  return o.str();
}

}  // namespace pggr
