#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <variant>

#include "pggr/harness.hpp"

namespace pggr {

// configuration error with file/line context; the CLI maps it to exit code 2
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace cfgdetail {

struct Entry {
  std::variant<double, bool, std::string, std::vector<double>> value;
  int line = 0;
};

using SectionMap = std::map<std::string, std::map<std::string, Entry>>;

[[noreturn]] inline void fail(const std::string& src, int line, const std::string& msg) {
  throw ConfigError(strfmt("%s:%d: %s", src.c_str(), line, msg.c_str()));
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool valid_ident(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

inline double parse_number(const std::string& tok, const std::string& src, int line) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) fail(src, line, strfmt("trailing characters in number '%s'", tok.c_str()));
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail(src, line, strfmt("expected a number, got '%s'", tok.c_str()));
  }
}

inline Entry parse_value(const std::string& raw, const std::string& src, int line) {
  Entry e;
  e.line = line;
  if (raw.empty()) fail(src, line, "missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"')
      fail(src, line, "unterminated string value");
    e.value = raw.substr(1, raw.size() - 2);
  } else if (raw == "true" || raw == "false") {
    e.value = (raw == "true");
  } else if (raw.front() == '[') {
    if (raw.back() != ']') fail(src, line, "unterminated array value");
    std::vector<double> vals;
    std::string body = raw.substr(1, raw.size() - 2);
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) fail(src, line, "empty array element");
      vals.push_back(parse_number(tok, src, line));
    }
    e.value = std::move(vals);
  } else {
    e.value = parse_number(raw, src, line);
  }
  return e;
}

inline SectionMap parse_sections(const std::string& text, const std::string& src) {
  SectionMap out;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  int ln = 0;
  while (std::getline(ss, line)) {
    ++ln;
    // strip comments outside quotes
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(src, ln, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_ident(section)) fail(src, ln, strfmt("bad section name '%s'", section.c_str()));
      continue;
    }
    size_t eq = std::string::npos;
    bool s = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') s = !s;
      if (line[i] == '=' && !s) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos) fail(src, ln, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!valid_ident(key)) fail(src, ln, strfmt("bad key name '%s'", key.c_str()));
    if (section.empty()) fail(src, ln, "key outside any [section]");
    auto& sec = out[section];
    if (sec.count(key)) fail(src, ln, strfmt("duplicate key '%s.%s'", section.c_str(), key.c_str()));
    sec[key] = parse_value(trim(line.substr(eq + 1)), src, ln);
  }
  return out;
}

// typed takers: consume a key (erasing it) so leftovers can be rejected
inline std::optional<Entry> take(SectionMap& m, const std::string& sec, const std::string& key) {
  auto si = m.find(sec);
  if (si == m.end()) return std::nullopt;
  auto ki = si->second.find(key);
  if (ki == si->second.end()) return std::nullopt;
  Entry e = ki->second;
  si->second.erase(ki);
  if (si->second.empty()) m.erase(si);
  return e;
}

inline double take_number(SectionMap& m, const std::string& src, const std::string& sec,
                          const std::string& key, double defv) {
  auto e = take(m, sec, key);
  if (!e) return defv;
  if (!std::holds_alternative<double>(e->value))
    fail(src, e->line, strfmt("'%s.%s' must be a number", sec.c_str(), key.c_str()));
  return std::get<double>(e->value);
}

inline int take_int(SectionMap& m, const std::string& src, const std::string& sec,
                    const std::string& key, int defv) {
  double v = take_number(m, src, sec, key, defv);
  PGGR_REQUIRE(std::abs(v - std::round(v)) < 1e-9,
               strfmt("'%s.%s' must be an integer", sec.c_str(), key.c_str()));
  return int(std::llround(v));
}

inline std::string take_string(SectionMap& m, const std::string& src, const std::string& sec,
                               const std::string& key, const std::string& defv) {
  auto e = take(m, sec, key);
  if (!e) return defv;
  if (!std::holds_alternative<std::string>(e->value))
    fail(src, e->line, strfmt("'%s.%s' must be a quoted string", sec.c_str(), key.c_str()));
  return std::get<std::string>(e->value);
}

inline bool take_bool(SectionMap& m, const std::string& src, const std::string& sec,
                      const std::string& key, bool defv) {
  auto e = take(m, sec, key);
  if (!e) return defv;
  if (!std::holds_alternative<bool>(e->value))
    fail(src, e->line, strfmt("'%s.%s' must be true or false", sec.c_str(), key.c_str()));
  return std::get<bool>(e->value);
}

inline std::vector<double> take_list(SectionMap& m, const std::string& src,
                                     const std::string& sec, const std::string& key,
                                     std::vector<double> defv) {
  auto e = take(m, sec, key);
  if (!e) return defv;
  if (!std::holds_alternative<std::vector<double>>(e->value))
    fail(src, e->line, strfmt("'%s.%s' must be an array", sec.c_str(), key.c_str()));
  return std::get<std::vector<double>>(e->value);
}

}  // namespace cfgdetail

// Full experiment description: problem + method + algorithm settings + run
// plumbing, parsed from a sectioned key=value file.
struct ExperimentConfig {
  std::string problem_name;
  ParamMap problem_params;
  Method method = Method::pggr;
  IceConfig ice;
  int n_rep = 2;
  std::uint64_t base_seed = 1;
  std::string out_dir;
  int jobs = 1;
  std::optional<double> reference;
  std::uint64_t cmc_n = 0;
  std::string sweep_param;
  std::vector<double> sweep_values;

  static ExperimentConfig from_text(const std::string& text, const std::string& src) {
    using namespace cfgdetail;
    SectionMap m = parse_sections(text, src);
    ExperimentConfig c;

    c.problem_name = take_string(m, src, "problem", "name", "");
    if (c.problem_name.empty())
      throw ConfigError(strfmt("%s: missing required field 'problem.name'", src.c_str()));
    if (auto pi = m.find("problem"); pi != m.end()) {
      for (auto& [key, e] : pi->second) {
        if (!std::holds_alternative<double>(e.value))
          fail(src, e.line, strfmt("'problem.%s' must be a number", key.c_str()));
        c.problem_params[key] = std::get<double>(e.value);
      }
      m.erase(pi);
    }

    std::string mth = take_string(m, src, "run", "method", "pggr");
    try {
      c.method = method_from_string(mth);
    } catch (const std::exception& e) {
      throw ConfigError(strfmt("%s: %s", src.c_str(), e.what()));
    }
    c.n_rep = take_int(m, src, "run", "n_rep", c.n_rep);
    double seed = take_number(m, src, "run", "seed", double(c.base_seed));
    PGGR_REQUIRE(seed >= 0 && std::abs(seed - std::round(seed)) < 1e-9,
                 "'run.seed' must be a nonnegative integer");
    c.base_seed = std::uint64_t(std::llround(seed));
    c.out_dir = take_string(m, src, "run", "out", c.out_dir);
    c.jobs = take_int(m, src, "run", "jobs", c.jobs);
    double ref = take_number(m, src, "run", "reference", -1.0);
    if (ref > 0) c.reference = ref;
    double cn = take_number(m, src, "run", "cmc_n", 0.0);
    PGGR_REQUIRE(cn >= 0 && std::abs(cn - std::round(cn)) < 1e-3, "'run.cmc_n' must be an integer");
    c.cmc_n = std::uint64_t(std::llround(cn));

    IceConfig& ic = c.ice;
    ic.delta_target = take_number(m, src, "ice", "delta_target", ic.delta_target);
    ic.delta_stop = take_number(m, src, "ice", "delta_stop", ic.delta_stop);
    ic.t_max = take_int(m, src, "ice", "t_max", ic.t_max);
    ic.eps_h = take_number(m, src, "ice", "eps_h", ic.eps_h);
    ic.n_c = take_int(m, src, "ice", "n_c", ic.n_c);
    ic.m0 = take_int(m, src, "ice", "m0", ic.m0);
    ic.n_pre = take_int(m, src, "ice", "n_pre", ic.n_pre);
    ic.n_ft = take_int(m, src, "ice", "n_ft", ic.n_ft);
    ic.m_add = take_int(m, src, "ice", "m_add", ic.m_add);
    ic.beta = take_number(m, src, "ice", "beta", ic.beta);
    ic.k_mix = take_int(m, src, "ice", "k_mix", ic.k_mix);
    ic.n_final = take_int(m, src, "ice", "n_final", ic.n_final);
    ic.em_restarts = take_int(m, src, "ice", "em_restarts", ic.em_restarts);
    ic.store_traces = take_bool(m, src, "ice", "store_traces", ic.store_traces);
    std::string act =
        take_string(m, src, "ice", "activation", activation_name(ic.activation));
    try {
      ic.activation = parse_activation(act);
    } catch (const std::exception&) {
      throw ConfigError(
          strfmt("%s: 'ice.activation' must be \"tanh\" or \"leaky_relu\", got \"%s\"",
                 src.c_str(), act.c_str()));
    }
    for (double v : take_list(m, src, "ice", "encoder", {})) ic.encoder.push_back(int(std::llround(v)));
    for (double v : take_list(m, src, "ice", "head", {})) ic.head.push_back(int(std::llround(v)));

    c.sweep_param = take_string(m, src, "sweep", "parameter", "");
    c.sweep_values = take_list(m, src, "sweep", "values", {});

    if (!m.empty()) {
      const auto& [sec, keys] = *m.begin();
      const auto& [key, e] = *keys.begin();
      fail(src, e.line, strfmt("unknown key '%s.%s'", sec.c_str(), key.c_str()));
    }
    if (c.method == Method::cmc && c.cmc_n == 0)
      throw ConfigError(strfmt("%s: method \"cmc\" requires 'run.cmc_n'", src.c_str()));
    try {
      c.ice.validate();
      PGGR_REQUIRE(c.n_rep >= 1, "'run.n_rep' must be at least 1");
      PGGR_REQUIRE(c.jobs >= 1, "'run.jobs' must be at least 1");
    } catch (const std::exception& e) {
      throw ConfigError(strfmt("%s: %s", src.c_str(), e.what()));
    }
    return c;
  }

  static ExperimentConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(strfmt("cannot open config file '%s'", path.c_str()));
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), path);
  }

  // "section.key=value" with the same validation as the file syntax
  void apply_override(const std::string& spec) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos)
      throw ConfigError(strfmt("override '%s' is not of the form section.key=value", spec.c_str()));
    std::string path = cfgdetail::trim(spec.substr(0, eq));
    size_t dot = path.find('.');
    if (dot == std::string::npos)
      throw ConfigError(strfmt("override key '%s' must be section.key", path.c_str()));
    std::string val = cfgdetail::trim(spec.substr(eq + 1));
    if (val.empty()) throw ConfigError(strfmt("override '%s' has no value", spec.c_str()));
    // bare words that are not numbers/bools/arrays are treated as strings
    const char f = val.front();
    const bool literal = f == '"' || f == '[' || f == '-' || f == '+' || f == '.' ||
                         std::isdigit(static_cast<unsigned char>(f)) || val == "true" ||
                         val == "false";
    if (!literal) val = "\"" + val + "\"";
    std::string text = strfmt("[%s]\n%s = %s\n", path.substr(0, dot).c_str(),
                              path.substr(dot + 1).c_str(), val.c_str());
    merge_text(text, strfmt("--override %s", spec.c_str()));
  }

  // canonical serialization: stable key order, numbers via %.17g
  std::string canonical_text() const {
    std::ostringstream o;
    auto num = [](double v) { return strfmt("%.17g", v); };
    o << "[problem]\n";
    o << "name = \"" << problem_name << "\"\n";
    for (const auto& [k, v] : problem_params) o << k << " = " << num(v) << "\n";
    o << "\n[run]\n";
    o << "method = \"" << method_name(method) << "\"\n";
    o << "n_rep = " << n_rep << "\n";
    o << "seed = " << base_seed << "\n";
    if (!out_dir.empty()) o << "out = \"" << out_dir << "\"\n";
    o << "jobs = " << jobs << "\n";
    if (reference) o << "reference = " << num(*reference) << "\n";
    if (cmc_n) o << "cmc_n = " << num(double(cmc_n)) << "\n";
    o << "\n[ice]\n";
    o << "delta_target = " << num(ice.delta_target) << "\n";
    o << "delta_stop = " << num(ice.delta_stop) << "\n";
    o << "t_max = " << ice.t_max << "\n";
    o << "eps_h = " << num(ice.eps_h) << "\n";
    o << "n_c = " << ice.n_c << "\n";
    o << "m0 = " << ice.m0 << "\n";
    o << "n_pre = " << ice.n_pre << "\n";
    o << "n_ft = " << ice.n_ft << "\n";
    o << "m_add = " << ice.m_add << "\n";
    o << "beta = " << num(ice.beta) << "\n";
    o << "k_mix = " << ice.k_mix << "\n";
    o << "n_final = " << ice.n_final << "\n";
    o << "em_restarts = " << ice.em_restarts << "\n";
    o << "store_traces = " << (ice.store_traces ? "true" : "false") << "\n";
    o << "activation = \"" << activation_name(ice.activation) << "\"\n";
    auto ints = [&](const std::vector<int>& v) {
      std::string s = "[";
      for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
      return s + "]";
    };
    if (!ice.encoder.empty()) o << "encoder = " << ints(ice.encoder) << "\n";
    if (!ice.head.empty()) o << "head = " << ints(ice.head) << "\n";
    if (!sweep_param.empty()) {
      o << "\n[sweep]\n";
      o << "parameter = \"" << sweep_param << "\"\n";
      std::string s = "[";
      for (size_t i = 0; i < sweep_values.size(); ++i)
        s += (i ? ", " : "") + strfmt("%.17g", sweep_values[i]);
      o << "values = " << s << "]\n";
    }
    return o.str();
  }

  std::uint64_t hash() const { return fnv1a64(canonical_text()); }

 private:
  // re-parse this config with `text` layered on top (override semantics)
  void merge_text(const std::string& text, const std::string& src) {
    std::string base = canonical_text();
    using namespace cfgdetail;
    SectionMap over = parse_sections(text, src);
    SectionMap cur = parse_sections(base, "<current>");
    for (auto& [sec, keys] : over)
      for (auto& [key, e] : keys) cur[sec][key] = e;
    std::ostringstream o;
    for (auto& [sec, keys] : cur) {
      o << "[" << sec << "]\n";
      for (auto& [key, e] : keys) {
        o << key << " = ";
        if (std::holds_alternative<double>(e.value)) {
          o << strfmt("%.17g", std::get<double>(e.value));
        } else if (std::holds_alternative<bool>(e.value)) {
          o << (std::get<bool>(e.value) ? "true" : "false");
        } else if (std::holds_alternative<std::string>(e.value)) {
          o << '"' << std::get<std::string>(e.value) << '"';
        } else {
          const auto& v = std::get<std::vector<double>>(e.value);
          o << "[";
          for (size_t i = 0; i < v.size(); ++i) o << (i ? ", " : "") << strfmt("%.17g", v[i]);
          o << "]";
        }
        o << "\n";
      }
    }
    *this = from_text(o.str(), src);
  }
};

}  // namespace pggr
