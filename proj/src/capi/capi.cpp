#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <new>
#include <optional>
#include <string>

#include "common/error.hpp"
#include "dataset/dataset.hpp"
#include "dataset/sample_io.hpp"
#include "dataset/synth.hpp"
#include "elcorec/elcorec.h"
#include "gat/train.hpp"
#include "harness/experiment.hpp"
#include "harness/metrics.hpp"
#include "harness/report_io.hpp"
#include "kb/knowledge_base.hpp"
#include "lm/finetune.hpp"
#include "rap/rap_builder.hpp"

struct elc_kb {
  elcorec::kb::KnowledgeBase kb;
};
struct elc_gat {
  elcorec::gat::GatModel model;
};
struct elc_lm {
  elcorec::lm::SurrogateLM model;
};

namespace {

using namespace elcorec;
namespace fs = std::filesystem;

thread_local std::string g_last_error;

std::mutex g_log_mutex;
elc_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void log_line(const std::string& line) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  if (g_log_fn) g_log_fn(line.c_str(), g_log_user);
}

elc_status to_status(ErrorCode code) { return static_cast<elc_status>(static_cast<int>(code)); }

template <typename F>
elc_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ELC_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("JSON: ") + e.what();
    return ELC_ERR_FORMAT;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return ELC_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ELC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ELC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return ELC_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw InvalidArgumentError(std::string(what) + " must not be NULL");
}

std::string str(const char* s) { return s ? s : ""; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_or_empty(const char* text) {
  if (!text || !*text) return nlohmann::json::object();
  return nlohmann::json::parse(text);
}

harness::ScoreRow score_row(const std::string& id, double p, int label) { return {id, p, label}; }

std::vector<rap::RapPrompt> read_prompts_nonempty(const char* path) {
  auto prompts = rap::read_prompts(str(path));
  if (prompts.empty()) throw InvalidArgumentError(str(path) + " holds no prompts");
  return prompts;
}

}  // namespace

extern "C" {

const char* elc_version(void) { return "0.1.0"; }

const char* elc_status_name(elc_status status) {
  switch (status) {
    case ELC_OK: return "ok";
    case ELC_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case ELC_ERR_IO: return "io";
    case ELC_ERR_FORMAT: return "format";
    case ELC_ERR_DOMAIN: return "domain";
    case ELC_ERR_DIMENSION: return "dimension";
    case ELC_ERR_LOOKUP: return "lookup";
    case ELC_ERR_REFERENTIAL: return "referential";
    case ELC_ERR_DEGENERATE_SPLIT: return "degenerate_split";
    case ELC_ERR_NUMERIC: return "numeric";
    case ELC_ERR_CONSTRUCTION: return "construction";
    case ELC_ERR_INJECTION: return "injection";
    case ELC_ERR_STAGE: return "stage";
    case ELC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* elc_last_error(void) { return g_last_error.c_str(); }

void elc_free_string(char* s) { std::free(s); }

void elc_set_logger(elc_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

elc_status elc_synth_write(const char* config_json, const char* out_dir) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const auto cfg = data::SynthConfig::from_json(parse_or_empty(config_json));
    data::write_synth(data::synth_generate(cfg), out_dir);
  });
}

elc_status elc_make_samples(const char* interactions, const char* items, const char* users, const char* schema_path,
                            const char* split_json, const char* out_dir, size_t n_out[3]) {
  return guarded([&] {
    need(interactions, "interactions");
    need(schema_path, "schema_path");
    need(out_dir, "out_dir");
    const auto opts = parse_or_empty(split_json);
    const auto schema = data::load_schema(schema_path);
    const auto ds = data::load_dataset(interactions, str(items), str(users), schema);
    if (ds.report.malformed > 0) log_line(ds.report.summary());
    const auto samples = data::build_samples(ds.records, ds.catalog, schema.rating_threshold);
    const std::string kind = opts.value("split", "temporal");
    const auto max_history = opts.value("max_history", std::size_t{100});
    std::vector<data::Sample> parts[3];
    if (kind == "temporal") {
      auto sp = data::split_temporal(samples, opts.value("ratios", std::array<double, 3>{0.8, 0.1, 0.1}));
      for (const auto& w : sp.warnings) log_line("warning: " + w);
      parts[0] = std::move(sp.train);
      parts[1] = std::move(sp.valid);
      parts[2] = std::move(sp.test);
    } else if (kind == "user") {
      const double ratio = opts.value("train_ratio", 0.9);
      const auto seed = opts.value("seed", std::uint64_t{0});
      auto outer = data::split_by_user(samples, ratio, seed);
      auto inner = data::split_by_user(outer.train, ratio, seed + 1);
      parts[0] = std::move(inner.train);
      parts[1] = std::move(inner.test);
      parts[2] = std::move(outer.test);
    } else {
      throw InvalidArgumentError("split must be 'temporal' or 'user'");
    }
    fs::create_directories(out_dir);
    const char* names[3] = {"train.jsonl", "valid.jsonl", "test.jsonl"};
    for (int i = 0; i < 3; ++i) {
      data::write_samples((fs::path(out_dir) / names[i]).string(), parts[i], max_history);
      if (n_out) n_out[i] = parts[i].size();
    }
  });
}

elc_status elc_kb_build(const char* items_path, const char* schema_path, size_t dim, uint64_t seed, elc_kb** out) {
  return guarded([&] {
    need(items_path, "items_path");
    need(schema_path, "schema_path");
    need(out, "out");
    const auto ds = data::load_dataset("", items_path, "", data::load_schema(schema_path));
    if (ds.report.malformed > 0) log_line(ds.report.summary());
    *out = new elc_kb{kb::build_kb(ds.catalog.items, dim, seed)};
  });
}

elc_status elc_kb_load(const char* path, elc_kb** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new elc_kb{kb::KnowledgeBase::load(path)};
  });
}

elc_status elc_kb_save(const elc_kb* kb, const char* path) {
  return guarded([&] {
    need(kb, "kb");
    need(path, "path");
    kb->kb.save(path);
  });
}

elc_status elc_kb_size(const elc_kb* kb, size_t* n) {
  return guarded([&] {
    need(kb, "kb");
    need(n, "n");
    *n = kb->kb.size();
  });
}

elc_status elc_kb_topk(const elc_kb* kb, const char* target_id, const char* const* history, size_t n_history,
                       size_t k, char** out_json) {
  return guarded([&] {
    need(kb, "kb");
    need(target_id, "target_id");
    need(out_json, "out_json");
    if (n_history > 0) need(history, "history");
    std::vector<std::string> hist;
    for (size_t i = 0; i < n_history; ++i) {
      need(history[i], "history entry");
      hist.emplace_back(history[i]);
    }
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : kb::retrieve_topk(kb->kb, target_id, hist, k))
      arr.push_back({{"item_id", r.item_id}, {"similarity", r.similarity}, {"position", r.position}});
    *out_json = dup_string(arr.dump());
  });
}

void elc_kb_free(elc_kb* kb) { delete kb; }

elc_status elc_build_prompts(const char* samples_path, const elc_kb* kb, const char* options_json,
                             const char* out_path, size_t* n_out) {
  return guarded([&] {
    need(samples_path, "samples_path");
    need(kb, "kb");
    need(out_path, "out_path");
    const auto opts = parse_or_empty(options_json);
    const std::string mode = opts.value("mode", "rap");
    if (mode != "rap" && mode != "plain") throw InvalidArgumentError("mode must be 'rap' or 'plain'");
    rap::RapOptions ro;
    ro.k_ret = opts.value("k_ret", ro.k_ret);
    ro.k_rec = opts.value("k_rec", ro.k_rec);
    ro.show_rating = opts.value("show_rating", ro.show_rating);
    const std::size_t k_plain = opts.value("k_plain", ro.k_ret + ro.k_rec);
    const auto tpl = opts.contains("template") ? rap::RapTemplate::load(opts.at("template").get<std::string>())
                                               : rap::RapTemplate::defaults();
    std::vector<rap::RapPrompt> prompts;
    for (const auto& s : data::read_samples(samples_path))
      prompts.push_back(mode == "rap" ? rap::build_rap_prompt(s, kb->kb, ro, tpl)
                                      : rap::build_plain_prompt(s, kb->kb, k_plain, ro.show_rating, tpl));
    rap::write_prompts(out_path, prompts);
    if (n_out) *n_out = prompts.size();
  });
}

elc_status elc_gat_train(const char* train_samples, const char* valid_samples, const char* config_json,
                         elc_gat** out, char** report_json) {
  return guarded([&] {
    need(train_samples, "train_samples");
    need(valid_samples, "valid_samples");
    need(out, "out");
    const auto cfg = gat::GatConfig::from_json(parse_or_empty(config_json));
    const auto train = data::read_samples(train_samples);
    const auto valid = data::read_samples(valid_samples);
    auto handle = new elc_gat{gat::make_gat(cfg, train)};
    try {
      const auto rep = gat::train_gat(handle->model, train, valid, log_line);
      if (report_json) {
        auto j = rep.to_json();
        j["seconds_per_step"] = rep.seconds_per_step;
        j["seconds"] = rep.seconds;
        *report_json = dup_string(j.dump());
      }
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

elc_status elc_gat_load(const char* path, elc_gat** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new elc_gat{gat::GatModel::load(path)};
  });
}

elc_status elc_gat_save(const elc_gat* g, const char* path) {
  return guarded([&] {
    need(g, "gat");
    need(path, "path");
    g->model.save(path);
  });
}

elc_status elc_gat_dim(const elc_gat* g, size_t* d) {
  return guarded([&] {
    need(g, "gat");
    need(d, "d");
    *d = g->model.config().d;
  });
}

elc_status elc_gat_embed(const elc_gat* g, const char* samples_path, const char* out_path, size_t* n_out) {
  return guarded([&] {
    need(g, "gat");
    need(samples_path, "samples_path");
    need(out_path, "out_path");
    const auto samples = data::read_samples(samples_path);
    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    harness::write_embeddings(out_path, ids, gat::gat_embed(g->model, samples), g->model.config().d);
    if (n_out) *n_out = samples.size();
  });
}

elc_status elc_gat_predict(const elc_gat* g, const char* samples_path, const char* scores_path, size_t* n_out) {
  return guarded([&] {
    need(g, "gat");
    need(samples_path, "samples_path");
    need(scores_path, "scores_path");
    const auto samples = data::read_samples(samples_path);
    const auto p = gat::gat_predict(g->model, samples);
    std::vector<harness::ScoreRow> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) rows.push_back(score_row(samples[i].id, p[i], samples[i].label));
    harness::write_scores(scores_path, rows);
    if (n_out) *n_out = rows.size();
  });
}

void elc_gat_free(elc_gat* g) { delete g; }

elc_status elc_lm_train(const char* prompts_path, const elc_gat* g, const char* config_json, elc_lm** out,
                        char** report_json) {
  return guarded([&] {
    need(prompts_path, "prompts_path");
    need(out, "out");
    auto cfg_json = parse_or_empty(config_json);
    if (g && !cfg_json.contains("d_gat")) cfg_json["d_gat"] = g->model.config().d;
    const auto cfg = lm::LmConfig::from_json(cfg_json);
    if (cfg.inject && !g) throw InvalidArgumentError("injection is enabled but no expert checkpoint was given");
    const auto prompts = read_prompts_nonempty(prompts_path);
    auto handle = new elc_lm{lm::SurrogateLM(cfg, lm::build_prompt_tokenizer(prompts))};
    try {
      const auto experts = cfg.inject ? lm::expert_rows(g->model, prompts) : std::vector<double>{};
      const auto rep = lm::finetune(handle->model, prompts, experts, log_line);
      if (report_json) {
        auto j = rep.to_json();
        j["seconds_per_step"] = rep.seconds_per_step;
        j["seconds"] = rep.seconds;
        *report_json = dup_string(j.dump());
      }
    } catch (...) {
      delete handle;
      throw;
    }
    *out = handle;
  });
}

elc_status elc_lm_load(const char* path, elc_lm** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new elc_lm{lm::SurrogateLM::load(path)};
  });
}

elc_status elc_lm_save(const elc_lm* m, const char* path) {
  return guarded([&] {
    need(m, "lm");
    need(path, "path");
    m->model.save(path);
  });
}

elc_status elc_lm_infer(const elc_lm* m, const elc_gat* g, const char* prompts_path, const char* scores_path,
                        size_t* n_out) {
  return guarded([&] {
    need(m, "lm");
    need(prompts_path, "prompts_path");
    need(scores_path, "scores_path");
    const bool inject = m->model.config().inject;
    if (inject && !g) throw InvalidArgumentError("this LM was trained with injection; an expert checkpoint is required");
    const auto prompts = read_prompts_nonempty(prompts_path);
    const auto experts = inject ? lm::expert_rows(g->model, prompts) : std::vector<double>{};
    const auto p = lm::lm_score(m->model, prompts, experts);
    std::vector<harness::ScoreRow> rows;
    for (std::size_t i = 0; i < prompts.size(); ++i) rows.push_back(score_row(prompts[i].id, p[i], prompts[i].label));
    harness::write_scores(scores_path, rows);
    if (n_out) *n_out = rows.size();
  });
}

void elc_lm_free(elc_lm* m) { delete m; }

elc_status elc_auc(const int* labels, const double* scores, size_t n, double* out) {
  return guarded([&] {
    need(out, "out");
    if (n > 0) {
      need(labels, "labels");
      need(scores, "scores");
    }
    *out = harness::auc(std::span<const int>(labels, n), std::span<const double>(scores, n));
  });
}

elc_status elc_eval_scores(const char* scores_path, char** metrics_json) {
  return guarded([&] {
    need(scores_path, "scores_path");
    need(metrics_json, "metrics_json");
    const auto rows = harness::read_scores(scores_path);
    std::vector<int> y;
    std::vector<double> p;
    for (const auto& r : rows) {
      y.push_back(r.label);
      p.push_back(r.p_click);
    }
    nlohmann::ordered_json j;
    j["auc"] = harness::auc(y, p);
    j["logloss"] = harness::logloss(y, p);
    j["acc"] = harness::accuracy(y, p);
    j["n"] = rows.size();
    *metrics_json = dup_string(j.dump());
  });
}

elc_status elc_run_experiment(const char* config_path, const char* overrides_json, char** result_json) {
  return guarded([&] {
    need(config_path, "config_path");
    need(result_json, "result_json");
    auto j = harness::read_json(config_path);
    if (overrides_json && *overrides_json) j.merge_patch(nlohmann::ordered_json::parse(overrides_json));
    const auto cfg = harness::ExperimentConfig::from_json(j, fs::path(config_path).parent_path().string());
    const auto rep = harness::run_experiment(cfg, log_line);
    nlohmann::ordered_json out;
    out["metrics"] = rep.to_json();
    out["timing"] = rep.timing.to_json();
    *result_json = dup_string(out.dump());
  });
}

}  // extern "C"
