#include "nodemap/nodemap.h"

#include "nodemap/classify.hpp"
#include "nodemap/ingest.hpp"
#include "nodemap/model.hpp"
#include "nodemap/synth.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>

struct nm_config {
  nodemap::RunConfig cfg;
};

struct nm_model {
  nodemap::Model model;
};

struct nm_result {
  nodemap::ClassifiedNode node;
};

namespace {

namespace fs = std::filesystem;
using namespace nodemap;

thread_local std::string g_last_error;

nm_status fail(nm_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Runs body, translating exceptions into status codes.
template <typename F>
nm_status api(F&& body) {
  try {
    body();
    return NM_OK;
  } catch (const InputError& e) {
    return fail(NM_ERR_INPUT, e.what());
  } catch (const NumericError& e) {
    return fail(NM_ERR_NUMERIC, e.what());
  } catch (const ArgumentError& e) {
    return fail(NM_ERR_ARGUMENT, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(NM_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(NM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(NM_ERR_INTERNAL, "unknown error");
  }
}

template <typename T>
const T& need(const T* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is null");
  return *p;
}

const char* need_str(const char* s, const char* what) {
  if (!s) throw ArgumentError(std::string(what) + " is null");
  return s;
}

nm_status copy_out(const std::string& text, char* buf, size_t len, size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buf) return NM_OK;
  if (len < text.size() + 1) return fail(NM_ERR_ARGUMENT, "buffer too small");
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return NM_OK;
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

extern "C" {

const char* nm_version(void) { return "0.1.0"; }

const char* nm_last_error(void) { return g_last_error.c_str(); }

nm_status nm_config_new(nm_config** out) {
  return api([&] {
    if (!out) throw ArgumentError("out is null");
    *out = new nm_config{};
  });
}

void nm_config_free(nm_config* cfg) { delete cfg; }

nm_status nm_config_load(nm_config* cfg, const char* path) {
  return api([&] {
    if (!cfg) throw ArgumentError("config is null");
    RunConfig next = cfg->cfg;
    load_config_file(next, need_str(path, "path"));
    cfg->cfg = next;
  });
}

nm_status nm_config_set(nm_config* cfg, const char* key, const char* json_value) {
  return api([&] {
    if (!cfg) throw ArgumentError("config is null");
    set_config_value(cfg->cfg, need_str(key, "key"), need_str(json_value, "value"));
  });
}

nm_status nm_config_get(const nm_config* cfg, const char* key, char* buf, size_t len, size_t* needed) {
  nm_status status = NM_OK;
  const nm_status outer = api([&] {
    status = copy_out(config_value(need(cfg, "config").cfg, need_str(key, "key")), buf, len, needed);
  });
  return outer != NM_OK ? outer : status;
}

nm_status nm_config_to_json(const nm_config* cfg, char* buf, size_t len, size_t* needed) {
  nm_status status = NM_OK;
  const nm_status outer = api([&] { status = copy_out(config_to_json(need(cfg, "config").cfg).dump(1), buf, len, needed); });
  return outer != NM_OK ? outer : status;
}

size_t nm_config_key_count(void) { return config_keys().size(); }

const char* nm_config_key_name(size_t index) {
  return index < config_keys().size() ? config_keys()[index].name.c_str() : nullptr;
}

const char* nm_config_key_description(size_t index) {
  return index < config_keys().size() ? config_keys()[index].description.c_str() : nullptr;
}

const char* nm_config_env_var(void) { return kConfigEnv; }

nm_status nm_train(const char* training_csv, const char* nonnodal_csv, const nm_config* cfg, const int* k_candidates,
                   size_t n_candidates, nm_model** out) {
  return api([&] {
    if (!out) throw ArgumentError("out is null");
    if (n_candidates > 0 && !k_candidates) throw ArgumentError("k_candidates is null");
    const auto& config = need(cfg, "config").cfg;
    const auto train = ingest::read_training(need_str(training_csv, "training_csv"));
    std::optional<ManualTrainingSet> extra;
    if (nonnodal_csv) extra = ingest::read_labelled(nonnodal_csv);
    const std::span<const int> candidates(k_candidates, n_candidates);
    auto model = train_model(train, extra ? &*extra : nullptr, config, candidates);
    *out = new nm_model{std::move(model)};
  });
}

nm_status nm_model_load(const char* path, nm_model** out) {
  return api([&] {
    if (!out) throw ArgumentError("out is null");
    *out = new nm_model{load_model(need_str(path, "path"))};
  });
}

nm_status nm_model_save(const nm_model* model, const char* path) {
  return api([&] { save_model(need(model, "model").model, need_str(path, "path")); });
}

void nm_model_free(nm_model* model) { delete model; }

int nm_model_k_ext(const nm_model* model) { return model ? model->model.k_ext : 0; }

size_t nm_model_grid_size(const nm_model* model) { return model ? model->model.grid.size() : 0; }

nm_status nm_classify_file(const nm_model* model, const nm_config* cfg, const char* node_csv, int stage1_only,
                           nm_result** out) {
  return api([&] {
    if (!out) throw ArgumentError("out is null");
    const auto node = ingest::read_node(need_str(node_csv, "node_csv"));
    auto result = classify::classify_node(node, need(model, "model").model, need(cfg, "config").cfg, stage1_only != 0);
    *out = new nm_result{std::move(result)};
  });
}

void nm_result_free(nm_result* result) { delete result; }

nm_status nm_result_write(const nm_result* result, const char* json_path, const char* ppm_path) {
  return api([&] {
    const auto& node = need(result, "result").node;
    if (json_path) ingest::write_result(node, json_path);
    if (ppm_path) ingest::write_atomic(ppm_path, classify::render_ppm(node));
  });
}

const char* nm_result_node_id(const nm_result* result) { return result ? result->node.node_id.c_str() : nullptr; }

int nm_result_is_metastatic(const nm_result* result) {
  return result && result->node.verdict == Verdict::Metastatic ? 1 : 0;
}

double nm_result_score(const nm_result* result) { return result ? result->node.score : 0.0; }

int nm_result_rows(const nm_result* result) { return result ? result->node.rows : 0; }

int nm_result_cols(const nm_result* result) { return result ? result->node.cols : 0; }

nm_status nm_result_labels(const nm_result* result, int* out, size_t len) {
  return api([&] {
    const auto& labels = need(result, "result").node.labels;
    if (!out || len < labels.size()) throw ArgumentError("output buffer too small");
    std::copy(labels.begin(), labels.end(), out);
  });
}

nm_status nm_result_met_posterior(const nm_result* result, double* out, size_t len) {
  return api([&] {
    const auto& z = need(result, "result").node.met_posterior;
    if (!out || len < z.size()) throw ArgumentError("output buffer too small");
    std::copy(z.begin(), z.end(), out);
  });
}

nm_status nm_eval(const char* results_dir, const char* manifest_csv, double prevalence, const char* report_json,
                  const char* roc_csv) {
  return api([&] {
    const auto manifest = ingest::read_manifest(need_str(manifest_csv, "manifest_csv"));
    std::vector<ClassifiedNode> results;
    for (const auto& path : files_with_extension(need_str(results_dir, "results_dir"), ".json")) {
      auto node = ingest::read_result(path);
      const auto it = manifest.find(node.node_id);
      if (it == manifest.end()) throw InputError("no truth entry for node '" + node.node_id + "'");
      node.truth = it->second;
      results.push_back(std::move(node));
    }
    if (results.empty()) throw InputError("no result files in " + std::string(results_dir));
    // Sorting makes the report independent of the order results were produced in.
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.node_id < b.node_id; });
    const auto report = classify::evaluate(results, prevalence);
    ingest::write_atomic(need_str(report_json, "report_json"), classify::report_json(report));
    if (roc_csv) {
      std::vector<double> scores;
      std::vector<Verdict> truth;
      for (const auto& r : results) {
        scores.push_back(r.score);
        truth.push_back(*r.truth);
      }
      ingest::write_atomic(roc_csv, classify::roc_csv(classify::roc_points(scores, truth)));
    }
  });
}

nm_status nm_ppv(double sensitivity, double specificity, double prevalence, double* out) {
  return api([&] {
    if (!out) throw ArgumentError("out is null");
    for (double v : {sensitivity, specificity})
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("sensitivity and specificity must lie in [0, 1]");
    if (!(prevalence > 0.0 && prevalence < 1.0)) throw InputError("prevalence must lie in (0, 1)");
    *out = classify::ppv(sensitivity, specificity, prevalence);
  });
}

nm_status nm_synth(const char* out_dir, uint64_t seed, int normal_nodes, int metastatic_nodes, int min_blob,
                   int max_blob, int isolated) {
  return api([&] {
    synth::SynthConfig cfg;
    cfg.seed = seed;
    synth::BlobSpec blobs;
    blobs.min_size = min_blob;
    blobs.max_size = max_blob;
    blobs.isolated = isolated;
    synth::write_dataset(cfg, normal_nodes, metastatic_nodes, blobs, need_str(out_dir, "out_dir"));
  });
}

nm_status nm_sweep(const nm_model* model, const nm_config* cfg, const char* nodes_dir, const char* manifest_csv,
                   const double* betas, size_t n_betas, const double* nus, size_t n_nus, const char* out_csv) {
  return api([&] {
    const auto& m = need(model, "model").model;
    const auto& base = need(cfg, "config").cfg;
    if (!betas || !nus || n_betas == 0 || n_nus == 0) throw ArgumentError("empty beta or nu grid");
    const auto manifest = ingest::read_manifest(need_str(manifest_csv, "manifest_csv"));

    std::vector<classify::PreparedNode> nodes;
    for (const auto& path : files_with_extension(need_str(nodes_dir, "nodes_dir"), ".csv")) {
      auto node = ingest::read_node(path);
      const auto it = manifest.find(node.node_id);
      if (it != manifest.end()) node.truth = it->second;
      if (!node.truth) throw InputError("no truth entry for node '" + node.node_id + "'");
      nodes.push_back(classify::prepare_node(node, m, base));
    }
    if (nodes.empty()) throw InputError("no node files in " + std::string(nodes_dir));

    std::ostringstream table;
    table << "beta,nu,sensitivity,specificity,tp,fn,tn,fp\n";
    for (size_t a = 0; a < n_nus; ++a) {
      RunConfig run = base;
      run.nu_s1 = run.nu_s2 = nus[a];
      run.validate();
      std::vector<em::MixtureState> stage1;
      stage1.reserve(nodes.size());
      for (const auto& node : nodes) stage1.push_back(classify::fit_prepared(node, run, true).stage1);
      for (size_t b = 0; b < n_betas; ++b) {
        run.beta = betas[b];
        run.validate();
        std::vector<ClassifiedNode> results;
        for (size_t i = 0; i < nodes.size(); ++i) results.push_back(classify::refine(nodes[i], stage1[i], run).result);
        const auto report = classify::evaluate(results, 0.5);
        table << ingest::format_double(betas[b]) << ',' << ingest::format_double(nus[a]) << ','
              << ingest::format_double(report.sensitivity) << ',' << ingest::format_double(report.specificity) << ','
              << report.confusion.tp << ',' << report.confusion.fn << ',' << report.confusion.tn << ','
              << report.confusion.fp << '\n';
      }
    }
    ingest::write_atomic(need_str(out_csv, "out_csv"), table.str());
  });
}

}  // extern "C"
