#pragma once

#include "nodemap/mixture.hpp"
#include "nodemap/mrf.hpp"
#include "nodemap/preprocess.hpp"
#include "nodemap/priors.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace nodemap {

// Every tunable of the pipeline. Defaults are the tuned optimum
// k_ext=20, k_int=1, nu_s1=nu_s2=4, beta=15, rho 5 then 1.
struct RunConfig {
  preprocess::PreprocessConfig preprocess;
  int k_ext = 20;
  int k_int = 1;
  double nu_s1 = 4.0;
  double nu_s2 = 4.0;
  double beta = 15.0;
  double rho_s1 = 5.0;
  double rho_s2 = 1.0;
  double epsilon_s1 = 0.01;
  double theta_tol = 0.01;
  int max_outer = 500;
  int max_sweeps = 100;
  double inner_tol = 1e-8;
  int inner_max = 50;
  priors::PriorWeights weights;

  em::EmConfig em() const;
  mrf::MrfConfig mrf() const;
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string description;
};

// Keys accepted in config files and by set_config_value, in display order.
const std::vector<ConfigKey>& config_keys();

// Current value of a key rendered as JSON text.
std::string config_value(const RunConfig& cfg, const std::string& key);

// Sets one key from JSON text (a bare number, or an array for K_diag.*).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& json_text);

// Applies a flat object of dotted keys. Nested objects are flattened with '.'.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

// Environment variable naming a default config file.
inline constexpr const char* kConfigEnv = "NODEMAP_CONFIG";

}  // namespace nodemap
