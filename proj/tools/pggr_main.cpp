#include <CLI11.hpp>
#include <iostream>

#include "pggr/io.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  int jobs = 0;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "experiment config file")->required();
  cmd->add_option("--override", f.overrides, "config override section.key=value");
  cmd->add_option("--seed", f.seed, "base seed (overrides run.seed)");
  cmd->add_option("--jobs", f.jobs, "worker cap (overrides run.jobs)");
  cmd->add_option("--out", f.out_dir, "output directory (overrides run.out)");
}

// problem construction failures stem from the config: report as exit code 2
pggr::ProblemPtr make_problem_checked(const pggr::ExperimentConfig& cfg) {
  try {
    return pggr::make_problem(cfg.problem_name, cfg.problem_params);
  } catch (const std::exception& e) {
    throw pggr::ConfigError(e.what());
  }
}

pggr::ExperimentConfig load_config(const CommonFlags& f) {
  pggr::ExperimentConfig cfg = pggr::ExperimentConfig::from_file(f.config_path);
  for (const auto& ov : f.overrides) cfg.apply_override(ov);
  if (f.seed >= 0) cfg.base_seed = std::uint64_t(f.seed);
  if (f.jobs > 0) cfg.jobs = f.jobs;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  return cfg;
}

int cmd_run(const CommonFlags& f) {
  pggr::ExperimentConfig cfg = load_config(f);
  pggr::ProblemPtr prob = make_problem_checked(cfg);
  pggr::ExperimentSummary s;
  if (cfg.method == pggr::Method::cmc) {
    s = pggr::run_cmc_summary(*prob, cfg.cmc_n, cfg.base_seed, cfg.reference);
  } else {
    s = pggr::repeat_runs(cfg.method, *prob, cfg.ice, cfg.n_rep, cfg.base_seed,
                          cfg.reference, cfg.jobs);
  }
  std::cout << pggr::table_header() << "\n" << pggr::table_row(s) << "\n";
  if (!cfg.out_dir.empty()) {
    pggr::write_summary_artifacts(cfg.out_dir, s, cfg);
    std::cout << "artifacts written to " << cfg.out_dir << "\n";
  }
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::string& param_flag,
              const std::vector<double>& values_flag) {
  pggr::ExperimentConfig cfg = load_config(f);
  std::string param = !param_flag.empty() ? param_flag : cfg.sweep_param;
  std::vector<double> values = !values_flag.empty() ? values_flag : cfg.sweep_values;
  if (param.empty())
    throw pggr::ConfigError("sweep needs --parameter or a [sweep] section with 'parameter'");
  if (values.empty())
    throw pggr::ConfigError("sweep needs --values or a [sweep] section with 'values'");
  pggr::SweepParam sp = pggr::sweep_param_from_string(param);
  pggr::ProblemPtr prob = make_problem_checked(cfg);
  std::vector<pggr::ExperimentSummary> sums = pggr::sweep(
      sp, values, *prob, cfg.ice, cfg.n_rep, cfg.base_seed, cfg.reference, cfg.jobs);
  std::string csv = pggr::sweep_csv(param, values, sums);
  std::cout << csv;
  if (!cfg.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    pggr::iodetail::write_text(fs::path(cfg.out_dir) / ("sweep_" + param + ".csv"), csv);
    for (size_t i = 0; i < values.size(); ++i) {
      pggr::ExperimentConfig pc = cfg;
      pc.ice = pggr::sweep_point_config(sp, cfg.ice, values[i]);
      pggr::write_summary_artifacts(
          fs::path(cfg.out_dir) / pggr::strfmt("%s_%g", param.c_str(), values[i]), sums[i], pc);
    }
    std::cout << "artifacts written to " << cfg.out_dir << "\n";
  }
  return 0;
}

int cmd_table(const std::vector<std::string>& paths, const std::string& out_dir) {
  using pggr::Json;
  struct Row {
    std::string method;
    int rank;
    double n_g, mean, cov;
    bool has_ref = false;
    double rel = 0;
  };
  auto rank_of = [](const std::string& m) {
    if (m == "cmc") return 0;
    if (m == "ice_true") return 1;
    if (m == "pggr") return 2;
    if (m == "random") return 3;
    return 4;
  };
  std::vector<Row> rows;
  std::map<std::string, int> seen;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error(pggr::strfmt("cannot open summary '%s'", p.c_str()));
    Json j = Json::parse(in);
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != pggr::kSchemaVersion)
      throw std::runtime_error(
          pggr::strfmt("'%s': schema version mismatch (expected %d)", p.c_str(),
                       pggr::kSchemaVersion));
    Row r;
    r.method = j["method"].get<std::string>();
    int n = ++seen[r.method];
    if (n > 1) {
      std::cerr << "warning: duplicate method tag '" << r.method << "', suffixing\n";
      r.method += pggr::strfmt("#%d", n);
    }
    r.rank = rank_of(j["method"].get<std::string>());
    r.n_g = j["n_g"].get<double>();
    r.mean = j["mean_estimate"].get<double>();
    r.cov = j["cov"].is_null() ? pggr::kInf : j["cov"].get<double>();
    if (j.contains("rel_error")) {
      r.has_ref = true;
      r.rel = j["rel_error"].get<double>();
    }
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.rank < b.rank; });
  std::ostringstream text, csv;
  text << pggr::table_header() << "\n";
  csv << "method,n_g,mean_estimate,rel_error,cov\n";
  for (const auto& r : rows) {
    std::string eps = r.has_ref ? pggr::sci3(r.rel) : "-";
    std::string cov = std::isfinite(r.cov) ? pggr::sci3(r.cov) : "-";
    text << pggr::strfmt("%-10s %-12s %-12s %-10s %-10s", r.method.c_str(),
                         pggr::sci3(r.n_g).c_str(), pggr::sci3(r.mean).c_str(), eps.c_str(),
                         cov.c_str())
         << "\n";
    csv << r.method << "," << pggr::strfmt("%.17g", r.n_g) << ","
        << pggr::strfmt("%.17g", r.mean) << ","
        << (r.has_ref ? pggr::strfmt("%.17g", r.rel) : std::string("")) << ","
        << (std::isfinite(r.cov) ? pggr::strfmt("%.17g", r.cov) : std::string("")) << "\n";
  }
  std::cout << text.str();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  pggr::iodetail::write_text(fs::path(out_dir) / "table.txt", text.str());
  pggr::iodetail::write_text(fs::path(out_dir) / "table.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surrogate-assisted adaptive importance sampling for rare failures"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "execute repeated runs of one method");
  add_common(run, run_flags);

  CommonFlags sweep_flags;
  std::string sweep_parameter;
  std::vector<double> sweep_values;
  CLI::App* sw = app.add_subcommand("sweep", "parameter sweep (beta or m_add)");
  add_common(sw, sweep_flags);
  sw->add_option("--parameter", sweep_parameter, "swept parameter: beta | m_add");
  sw->add_option("--values", sweep_values, "swept values")->delimiter(',');

  std::vector<std::string> table_paths;
  std::string table_out = ".";
  CLI::App* tb = app.add_subcommand("table", "merge summary.json files into one table");
  tb->add_option("summaries", table_paths, "summary.json paths")->required();
  tb->add_option("--out", table_out, "output directory for table.txt/table.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (sw->parsed()) return cmd_sweep(sweep_flags, sweep_parameter, sweep_values);
    if (tb->parsed()) return cmd_table(table_paths, table_out);
  } catch (const pggr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
