#include "nodemap/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace nodemap {

em::EmConfig RunConfig::em() const {
  em::EmConfig c;
  c.nu = nu_s1;
  c.epsilon = epsilon_s1;
  c.max_outer = max_outer;
  c.inner_tol = inner_tol;
  c.inner_max = inner_max;
  return c;
}

mrf::MrfConfig RunConfig::mrf() const {
  mrf::MrfConfig c;
  c.beta = beta;
  c.nu = nu_s2;
  c.max_sweeps = max_sweeps;
  c.theta_tol = theta_tol;
  c.inner_tol = inner_tol;
  c.inner_max = inner_max;
  return c;
}

void RunConfig::validate() const {
  preprocess::validate(preprocess);
  if (k_ext < 1) throw InputError("k_ext must be at least 1");
  if (k_int < 0) throw InputError("k_int must be non-negative");
  if (!(rho_s1 > 0.0) || !(rho_s2 > 0.0)) throw InputError("rho_s1 and rho_s2 must be positive");
  em::validate(em());
  mrf::validate(mrf());
  for (const auto* w : {&weights.normal, &weights.metastatic, &weights.nonnodal}) {
    if (w->empty()) throw InputError("K_diag lists must not be empty");
    for (double v : *w)
      if (!(v > 0.0)) throw InputError("K_diag entries must be positive");
  }
}

namespace {

using nlohmann::json;

struct KeyBinding {
  ConfigKey key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
KeyBinding scalar(std::string name, std::string description, T RunConfig::*member) {
  return {{std::move(name), std::move(description)},
          [member](const RunConfig& c) { return json(c.*member); },
          [member](RunConfig& c, const json& v) { c.*member = v.get<T>(); }};
}

template <typename T>
KeyBinding pre(std::string name, std::string description, T preprocess::PreprocessConfig::*member) {
  return {{std::move(name), std::move(description)},
          [member](const RunConfig& c) { return json(c.preprocess.*member); },
          [member](RunConfig& c, const json& v) { c.preprocess.*member = v.get<T>(); }};
}

KeyBinding weights(std::string name, std::string description, std::vector<double> priors::PriorWeights::*member) {
  return {{std::move(name), std::move(description)},
          [member](const RunConfig& c) { return json(c.weights.*member); },
          [member](RunConfig& c, const json& v) {
            c.weights.*member = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
          }};
}

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> table = {
      scalar("k_ext", "principal components feeding the external discriminant", &RunConfig::k_ext),
      scalar("k_int", "internal (node-specific) variables", &RunConfig::k_int),
      scalar("nu_s1", "t degrees of freedom, stage 1", &RunConfig::nu_s1),
      scalar("nu_s2", "t degrees of freedom, stage 2", &RunConfig::nu_s2),
      scalar("beta", "MRF smoothness", &RunConfig::beta),
      scalar("rho_s1", "background-score power, stage 1", &RunConfig::rho_s1),
      scalar("rho_s2", "background-score power, stage 2", &RunConfig::rho_s2),
      scalar("epsilon_s1", "stage-1 relative-change tolerance", &RunConfig::epsilon_s1),
      scalar("theta_tol", "stage-2 relative-change tolerance on theta", &RunConfig::theta_tol),
      scalar("max_outer", "stage-1 iteration cap", &RunConfig::max_outer),
      scalar("max_sweeps", "stage-2 sweep cap", &RunConfig::max_sweeps),
      scalar("inner_tol", "tolerance of the coupled sub-iterations", &RunConfig::inner_tol),
      scalar("inner_max", "cap on the coupled sub-iterations", &RunConfig::inner_max),
      pre("sg_window", "Savitzky-Golay window (odd)", &preprocess::PreprocessConfig::sg_window),
      pre("sg_order", "Savitzky-Golay polynomial order", &preprocess::PreprocessConfig::sg_order),
      pre("crop_lo", "lowest wavelength kept (nm)", &preprocess::PreprocessConfig::crop_lo),
      pre("crop_hi", "highest wavelength kept (nm)", &preprocess::PreprocessConfig::crop_hi),
      weights("K_diag.normal", "prior weights, normal component", &priors::PriorWeights::normal),
      weights("K_diag.metastatic", "prior weights, metastatic component", &priors::PriorWeights::metastatic),
      weights("K_diag.nonnodal", "prior weights, non-nodal component", &priors::PriorWeights::nonnodal),
  };
  return table;
}

const KeyBinding& binding(const std::string& key) {
  for (const auto& b : bindings())
    if (b.key.name == key) return b;
  throw InputError("unknown config key '" + key + "'");
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string name = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      flatten(*it, name, out);
    else
      out[name] = *it;
  }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& b : bindings()) k.push_back(b.key);
    return k;
  }();
  return keys;
}

std::string config_value(const RunConfig& cfg, const std::string& key) { return binding(key).get(cfg).dump(); }

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& json_text) {
  const auto& b = binding(key);
  try {
    b.set(cfg, json::parse(json_text));
  } catch (const json::exception& e) {
    throw InputError("bad value for config key '" + key + "': " + e.what());
  }
}

void apply_config_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  std::map<std::string, json> flat;
  flatten(j, "", flat);
  for (const auto& [key, value] : flat) {
    const auto& b = binding(key);
    try {
      b.set(cfg, value);
    } catch (const json::exception& e) {
      throw InputError("bad value for config key '" + key + "': " + e.what());
    }
  }
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  apply_config_json(cfg, j);
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& b : bindings()) j[b.key.name] = b.get(cfg);
  return j;
}

}  // namespace nodemap
