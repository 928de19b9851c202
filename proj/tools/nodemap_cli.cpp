// Command-line front end. Talks to the library only through nodemap.h.

#include "nodemap/nodemap.h"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

// Process exit codes: ok, input error, numerical failure.
int exit_code(nm_status s) {
  switch (s) {
    case NM_OK:
      return 0;
    case NM_ERR_NUMERIC:
    case NM_ERR_INTERNAL:
      return 2;
    default:
      return 1;
  }
}

struct Failure {
  nm_status status;
  std::string message;
};

void check(nm_status s, const std::string& context = {}) {
  if (s != NM_OK) throw Failure{s, context.empty() ? nm_last_error() : context + ": " + nm_last_error()};
}

using ConfigPtr = std::unique_ptr<nm_config, decltype(&nm_config_free)>;
using ModelPtr = std::unique_ptr<nm_model, decltype(&nm_model_free)>;
using ResultPtr = std::unique_ptr<nm_result, decltype(&nm_result_free)>;

ConfigPtr new_config() {
  nm_config* c = nullptr;
  check(nm_config_new(&c));
  return {c, nm_config_free};
}

std::string config_get(const nm_config* cfg, const char* key) {
  size_t needed = 0;
  check(nm_config_get(cfg, key, nullptr, 0, &needed));
  std::string buf(needed, '\0');
  check(nm_config_get(cfg, key, buf.data(), buf.size(), &needed));
  buf.resize(needed - 1);
  return buf;
}

// "5,2" is shorthand for the JSON list [5,2].
std::string as_json_value(const std::string& text) {
  if (text.find(',') != std::string::npos && text.front() != '[') return "[" + text + "]";
  return text;
}

// Config layering: defaults, then the file named by the environment variable,
// then --config, then per-key flags.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON config file (flat dotted keys)");
    const auto defaults = new_config();
    for (size_t i = 0; i < nm_config_key_count(); ++i) {
      const std::string key = nm_config_key_name(i);
      const std::string help =
          std::string(nm_config_key_description(i)) + " (default: " + config_get(defaults.get(), key.c_str()) + ")";
      cmd->add_option_function<std::string>(
             "--" + key, [this, key](const std::string& v) { overrides[key] = v; }, help)
          ->type_name("VALUE")
          ->group("Config keys");
    }
  }

  ConfigPtr build() const {
    auto cfg = new_config();
    if (const char* env = std::getenv(nm_config_env_var()); env && *env) check(nm_config_load(cfg.get(), env), env);
    if (!file.empty()) check(nm_config_load(cfg.get(), file.c_str()), file);
    for (const auto& [key, value] : overrides) check(nm_config_set(cfg.get(), key.c_str(), as_json_value(value).c_str()));
    return cfg;
  }
};

ModelPtr load_model(const std::string& path) {
  nm_model* m = nullptr;
  check(nm_model_load(path.c_str(), &m));
  return {m, nm_model_free};
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      if (item.empty()) throw Failure{NM_ERR_INPUT, "empty entry in list '" + text + "'"};
      // a:b:c expands to the inclusive range a, a+c, ..., b
      const auto colon = item.find(':');
      try {
        if (colon == std::string::npos) {
          out.push_back(std::stod(item));
        } else {
          const auto second = item.find(':', colon + 1);
          const double lo = std::stod(item.substr(0, colon));
          const double hi = std::stod(item.substr(colon + 1, second - colon - 1));
          const double step = second == std::string::npos ? 1.0 : std::stod(item.substr(second + 1));
          if (!(step > 0)) throw Failure{NM_ERR_INPUT, "range step must be positive"};
          for (int k = 0; lo + k * step <= hi + 1e-9 * step; ++k) out.push_back(lo + k * step);
        }
      } catch (const std::logic_error&) {
        throw Failure{NM_ERR_INPUT, "bad number in list '" + text + "'"};
      }
      item.clear();
    } else {
      item += text[i];
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-pixel classification of scanned lymph nodes from reflectance spectra"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nm_version()));

  // train
  auto* train = app.add_subcommand("train", "Fit the external discriminant and class priors; write a model file");
  std::string train_csv, nonnodal_csv, model_out, select;
  ConfigOptions train_cfg;
  train->add_option("training", train_csv, "training CSV")->required();
  train->add_option("-o,--out", model_out, "model file to write")->required();
  train->add_option("--nonnodal", nonnodal_csv, "extra CSV of non-nodal spectra");
  train->add_option("--select-k-ext", select, "comma list of k_ext candidates chosen by leave-one-site-out CV");
  train_cfg.attach(train);

  // classify
  auto* cls = app.add_subcommand("classify", "Classify node files; write <id>.json and <id>.ppm per node");
  std::string model_path, out_dir;
  std::vector<std::string> node_files;
  bool stage1_only = false;
  ConfigOptions cls_cfg;
  cls->add_option("nodes", node_files, "node CSV files")->required();
  cls->add_option("-m,--model", model_path, "model file")->required();
  cls->add_option("-o,--out", out_dir, "output directory")->required();
  cls->add_flag("--stage1-only", stage1_only, "emit the stage-1 labelling without spatial smoothing");
  cls_cfg.attach(cls);

  // eval
  auto* ev = app.add_subcommand("eval", "Node-level sensitivity, specificity, AUC and PPV");
  std::string results_dir, manifest, report_out, roc_out;
  double prevalence = 0.2;
  ev->add_option("results", results_dir, "directory of result JSON files")->required();
  ev->add_option("--manifest", manifest, "truth manifest CSV (node_id,truth)")->required();
  ev->add_option("--prevalence", prevalence, "prevalence for the PPV estimate")->capture_default_str();
  ev->add_option("-o,--out", report_out, "report JSON")->required();
  ev->add_option("--roc", roc_out, "ROC points CSV");

  // synth
  auto* sy = app.add_subcommand("synth", "Write a synthetic training set and scanned nodes with ground truth");
  std::string synth_dir;
  std::uint64_t seed = 1;
  int n_normal = 30, n_met = 30, min_blob = 9, max_blob = 40, isolated = 0;
  sy->add_option("-o,--out", synth_dir, "output directory")->required();
  sy->add_option("--seed", seed, "random seed")->capture_default_str();
  sy->add_option("--normal", n_normal, "normal nodes")->capture_default_str();
  sy->add_option("--metastatic", n_met, "metastatic nodes")->capture_default_str();
  sy->add_option("--min-blob", min_blob, "smallest metastatic blob (pixels)")->capture_default_str();
  sy->add_option("--max-blob", max_blob, "largest metastatic blob (pixels)")->capture_default_str();
  sy->add_option("--isolated", isolated, "outlier pixels injected per node")->capture_default_str();

  // sweep
  auto* sw = app.add_subcommand("sweep", "Sensitivity/specificity over a beta x nu grid");
  std::string sweep_model, sweep_nodes, sweep_manifest, sweep_out;
  std::string betas = "0:30:5", nus = "3:20";
  ConfigOptions sw_cfg;
  sw->add_option("nodes", sweep_nodes, "directory of node CSV files")->required();
  sw->add_option("-m,--model", sweep_model, "model file")->required();
  sw->add_option("--manifest", sweep_manifest, "truth manifest CSV")->required();
  sw->add_option("-o,--out", sweep_out, "table CSV")->required();
  sw->add_option("--betas", betas, "beta values: list and/or lo:hi[:step] ranges")->capture_default_str();
  sw->add_option("--nus", nus, "nu values: list and/or lo:hi[:step] ranges")->capture_default_str();
  sw_cfg.attach(sw);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      auto cfg = train_cfg.build();
      std::vector<int> candidates;
      if (!select.empty())
        for (double v : parse_list(select)) candidates.push_back(static_cast<int>(v));
      nm_model* m = nullptr;
      check(nm_train(train_csv.c_str(), nonnodal_csv.empty() ? nullptr : nonnodal_csv.c_str(), cfg.get(),
                     candidates.data(), candidates.size(), &m),
            train_csv);
      ModelPtr model(m, nm_model_free);
      check(nm_model_save(model.get(), model_out.c_str()), model_out);
      std::cout << "model written to " << model_out << " (k_ext=" << nm_model_k_ext(model.get())
                << ", p=" << nm_model_grid_size(model.get()) << ")\n";
    } else if (cls->parsed()) {
      auto cfg = cls_cfg.build();
      auto model = load_model(model_path);
      fs::create_directories(out_dir);
      nm_status worst = NM_OK;
      int failures = 0;
      for (const auto& file : node_files) {
        nm_result* r = nullptr;
        nm_status s = nm_classify_file(model.get(), cfg.get(), file.c_str(), stage1_only ? 1 : 0, &r);
        if (s == NM_OK) {
          ResultPtr result(r, nm_result_free);
          const std::string id = nm_result_node_id(result.get());
          const auto json = (fs::path(out_dir) / (id + ".json")).string();
          const auto ppm = (fs::path(out_dir) / (id + ".ppm")).string();
          s = nm_result_write(result.get(), json.c_str(), ppm.c_str());
          if (s == NM_OK)
            std::cout << id << '\t' << (nm_result_is_metastatic(result.get()) ? "metastatic" : "normal") << '\t'
                      << nm_result_score(result.get()) << '\n';
        }
        if (s != NM_OK) {
          ++failures;
          std::cerr << "error: " << file << ": " << nm_last_error() << '\n';
          if (exit_code(s) > exit_code(worst)) worst = s;
        }
      }
      if (failures > 0) {
        std::cerr << failures << " of " << node_files.size() << " node(s) failed\n";
        return exit_code(worst);
      }
    } else if (ev->parsed()) {
      check(nm_eval(results_dir.c_str(), manifest.c_str(), prevalence, report_out.c_str(),
                    roc_out.empty() ? nullptr : roc_out.c_str()));
      std::cout << "report written to " << report_out << '\n';
    } else if (sy->parsed()) {
      check(nm_synth(synth_dir.c_str(), seed, n_normal, n_met, min_blob, max_blob, isolated));
      std::cout << "synthetic data written to " << synth_dir << '\n';
    } else if (sw->parsed()) {
      auto cfg = sw_cfg.build();
      auto model = load_model(sweep_model);
      const auto beta_grid = parse_list(betas);
      const auto nu_grid = parse_list(nus);
      check(nm_sweep(model.get(), cfg.get(), sweep_nodes.c_str(), sweep_manifest.c_str(), beta_grid.data(),
                     beta_grid.size(), nu_grid.data(), nu_grid.size(), sweep_out.c_str()));
      std::cout << "sweep table written to " << sweep_out << '\n';
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
