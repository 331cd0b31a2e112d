#include "qdetect/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <toml.hpp>

#include "qdetect/errors.hpp"

namespace qdetect {

using nlohmann::json;

namespace {

bool same_drift(const DriftSpec& a, const DriftSpec& b) {
  if (a.index() != b.index()) return false;
  if (const auto* ca = std::get_if<ConstantDrift>(&a)) return ca->mu == std::get<ConstantDrift>(b).mu;
  if (const auto* la = std::get_if<LinearStateSpaceDrift>(&a)) return la->r == std::get<LinearStateSpaceDrift>(b).r;
  return false;
}

// Both front ends are lowered to one JSON tree and validated once.
double as_number(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_null()) return kNoChange;
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity" || s == "Infinity" || s == "never") return kNoChange;
  }
  throw ConfigError("'" + key + "' must be a number");
}

std::vector<double> as_numbers(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("'" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_number(x, key));
  return out;
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("'") + key + "' has the wrong type");
  }
}

double positive(const json& j, const char* key, double fallback) {
  const double v = j.contains(key) ? as_number(j.at(key), key) : fallback;
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("'") + key + "' must be positive and finite");
  return v;
}

ExperimentConfig from_tree(const json& root) {
  if (!root.is_object()) throw ConfigError("configuration must be a table/object");
  static const char* known[] = {"seed", "n_paths", "dt", "horizon", "output_dir", "gamma_sweep", "tau_scenarios",
                                "thresholds", "mc_verify", "tol", "gap_allowance", "dominant_allowance", "system"};
  for (const auto& [key, _] : root.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown configuration key '" + key + "'");
  }
  ExperimentConfig c;
  if (!root.contains("system") || !root.at("system").is_object()) throw ConfigError("missing [system] table");
  const json& sys = root.at("system");
  if (!sys.contains("strengths")) throw ConfigError("missing system.strengths");
  try {
    c.system.strengths = SignalStrengths(as_numbers(sys.at("strengths"), "system.strengths"));
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("system.strengths: ") + e.what());
  }
  const std::string drift = field<std::string>(sys, "drift", "constant");
  if (drift == "constant") {
    const double mu = sys.contains("mu") ? as_number(sys.at("mu"), "system.mu") : 1.0;
    if (!(mu != 0.0) || !std::isfinite(mu)) throw ConfigError("system.mu must be finite and nonzero");
    c.system.drift = ConstantDrift{mu};
  } else if (drift == "linear_state_space") {
    c.system.drift = LinearStateSpaceDrift{positive(sys, "r", 0.5)};
  } else {
    throw ConfigError("system.drift must be 'constant' or 'linear_state_space', got '" + drift + "'");
  }
  const std::size_t n = c.system.n_sensors();

  if (!root.contains("gamma_sweep")) throw ConfigError("missing gamma_sweep");
  c.gamma_sweep = as_numbers(root.at("gamma_sweep"), "gamma_sweep");
  if (c.gamma_sweep.empty()) throw ConfigError("gamma_sweep is empty");
  for (double g : c.gamma_sweep) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ConfigError("gamma_sweep entries must be positive and finite");
  }
  if (!root.contains("tau_scenarios") || !root.at("tau_scenarios").is_array()) {
    throw ConfigError("missing tau_scenarios (array of arrays)");
  }
  for (const auto& row : root.at("tau_scenarios")) {
    std::vector<double> taus = as_numbers(row, "tau_scenarios");
    if (taus.size() != n) throw ConfigError("every tau scenario needs one entry per sensor");
    try {
      c.tau_scenarios.emplace_back(std::move(taus));
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("tau_scenarios: ") + e.what());
    }
  }
  if (c.tau_scenarios.empty()) throw ConfigError("tau_scenarios is empty");

  const long long n_paths = field<long long>(root, "n_paths", 10000);
  if (n_paths < 1) throw ConfigError("n_paths must be >= 1");
  c.n_paths = static_cast<std::size_t>(n_paths);
  c.dt = positive(root, "dt", c.dt);
  c.horizon = positive(root, "horizon", c.horizon);
  if (c.horizon < c.dt) throw ConfigError("horizon must be at least dt");
  const long long seed = field<long long>(root, "seed", 1);
  if (seed < 0) throw ConfigError("seed must be nonnegative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.output_dir = field<std::string>(root, "output_dir", c.output_dir);
  c.mc_verify = field<bool>(root, "mc_verify", false);
  c.tol = positive(root, "tol", c.tol);
  c.gap_allowance = positive(root, "gap_allowance", c.gap_allowance);
  c.dominant_allowance = positive(root, "dominant_allowance", c.dominant_allowance);
  if (root.contains("thresholds")) {
    std::vector<double> h = as_numbers(root.at("thresholds"), "thresholds");
    if (h.size() != n) throw ConfigError("thresholds need one entry per sensor");
    try {
      c.thresholds = ThresholdVector(std::move(h));
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("thresholds: ") + e.what());
    }
  }
  return c;
}

json number_or_inf(double x) { return std::isfinite(x) ? json(x) : json("inf"); }

json to_tree(const ExperimentConfig& c) {
  json sys;
  sys["strengths"] = c.system.strengths.values();
  if (const auto* k = std::get_if<ConstantDrift>(&c.system.drift)) {
    sys["drift"] = "constant";
    sys["mu"] = k->mu;
  } else if (const auto* l = std::get_if<LinearStateSpaceDrift>(&c.system.drift)) {
    sys["drift"] = "linear_state_space";
    sys["r"] = l->r;
  } else {
    throw ConfigError("custom drifts cannot be serialized");
  }
  json root;
  root["system"] = sys;
  root["gamma_sweep"] = c.gamma_sweep;
  json taus = json::array();
  for (const auto& t : c.tau_scenarios) {
    json row = json::array();
    for (double x : t.values()) row.push_back(number_or_inf(x));
    taus.push_back(row);
  }
  root["tau_scenarios"] = taus;
  root["n_paths"] = c.n_paths;
  root["dt"] = c.dt;
  root["horizon"] = c.horizon;
  root["seed"] = c.seed;
  root["output_dir"] = c.output_dir;
  root["mc_verify"] = c.mc_verify;
  root["tol"] = c.tol;
  root["gap_allowance"] = c.gap_allowance;
  root["dominant_allowance"] = c.dominant_allowance;
  if (c.thresholds) root["thresholds"] = c.thresholds->values();
  return root;
}

json toml_to_json(const toml::node& node, const std::string& key) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v, std::string(k.str()));
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v, key));
    return out;
  }
  if (const auto* v = node.as_floating_point()) {
    const double x = v->get();
    return std::isinf(x) && x > 0 ? json("inf") : json(x);
  }
  if (const auto* v = node.as_integer()) return json(v->get());
  if (const auto* v = node.as_boolean()) return json(v->get());
  if (const auto* v = node.as_string()) return json(v->get());
  throw ConfigError("unsupported TOML value for '" + key + "'");
}

std::string toml_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << x;
  std::string out = s.str();
  if (out.find_first_of(".eE") == std::string::npos) out += ".0";
  return out;
}

std::string toml_array(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_number(v[i]);
  return out + "]";
}

}  // namespace

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.system.strengths == b.system.strengths && same_drift(a.system.drift, b.system.drift) &&
         a.tau_scenarios == b.tau_scenarios && a.gamma_sweep == b.gamma_sweep && a.n_paths == b.n_paths &&
         a.dt == b.dt && a.horizon == b.horizon && a.seed == b.seed && a.output_dir == b.output_dir &&
         a.thresholds == b.thresholds && a.mc_verify == b.mc_verify && a.tol == b.tol &&
         a.gap_allowance == b.gap_allowance && a.dominant_allowance == b.dominant_allowance;
}

ExperimentConfig parse_config_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("JSON syntax: ") + e.what());
  }
  return from_tree(root);
}

ExperimentConfig parse_config_toml(const std::string& text) {
  try {
    const toml::table table = toml::parse(text);
    return from_tree(toml_to_json(table, ""));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML syntax: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }
}

ExperimentConfig load_config(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw ConfigError("cannot open config file " + filename);
  std::stringstream buf;
  buf << in.rdbuf();
  const bool is_json = filename.size() >= 5 && filename.compare(filename.size() - 5, 5, ".json") == 0;
  return is_json ? parse_config_json(buf.str()) : parse_config_toml(buf.str());
}

std::string to_json(const ExperimentConfig& config) { return to_tree(config).dump(2) + "\n"; }

std::string to_toml(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "seed = " << c.seed << '\n';
  out << "n_paths = " << c.n_paths << '\n';
  out << "dt = " << toml_number(c.dt) << '\n';
  out << "horizon = " << toml_number(c.horizon) << '\n';
  out << "output_dir = " << json(c.output_dir).dump() << '\n';
  out << "gamma_sweep = " << toml_array(c.gamma_sweep) << '\n';
  out << "tau_scenarios = [";
  for (std::size_t k = 0; k < c.tau_scenarios.size(); ++k) {
    out << (k ? ", " : "") << toml_array(c.tau_scenarios[k].values());
  }
  out << "]\n";
  if (c.thresholds) out << "thresholds = " << toml_array(c.thresholds->values()) << '\n';
  out << "mc_verify = " << (c.mc_verify ? "true" : "false") << '\n';
  out << "tol = " << toml_number(c.tol) << '\n';
  out << "gap_allowance = " << toml_number(c.gap_allowance) << '\n';
  out << "dominant_allowance = " << toml_number(c.dominant_allowance) << '\n';
  out << "\n[system]\n";
  out << "strengths = " << toml_array(c.system.strengths.values()) << '\n';
  if (const auto* k = std::get_if<ConstantDrift>(&c.system.drift)) {
    out << "drift = \"constant\"\nmu = " << toml_number(k->mu) << '\n';
  } else if (const auto* l = std::get_if<LinearStateSpaceDrift>(&c.system.drift)) {
    out << "drift = \"linear_state_space\"\nr = " << toml_number(l->r) << '\n';
  } else {
    throw ConfigError("custom drifts cannot be serialized");
  }
  return out.str();
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string canon = to_tree(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace qdetect
