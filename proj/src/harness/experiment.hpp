#pragma once

#include <array>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dataset/schema.hpp"
#include "dataset/synth.hpp"
#include "gat/model.hpp"
#include "lm/surrogate_lm.hpp"

namespace elcorec::harness {

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" or "files"
  data::SynthConfig synth;
  std::string interactions, items, users, schema;  // kind == "files"

  nlohmann::ordered_json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  std::string split = "temporal";  // "temporal" or "user"
  std::array<double, 3> ratios = {0.8, 0.1, 0.1};
  double user_train_ratio = 0.9;
  std::string mode = "rap";     // "rap" or "plain"
  std::string stages = "full";  // "gat" stops after the expert; "full" runs the LM too
  std::size_t k_ret = 15;
  std::size_t k_rec = 15;
  std::size_t k_plain = 0;  // plain-mode lines; 0 = k_ret + k_rec
  bool show_rating = true;
  std::size_t kb_dim = 256;
  std::size_t train_budget = 0;  // LM training prompts; 0 = whole train split
  std::size_t test_budget = 0;   // scored test samples; 0 = whole test split
  gat::GatConfig gat;
  lm::LmConfig lm;
  std::uint64_t seed = 0;  // model seed, copied into the GAT and LM configs
  std::string output_dir;  // empty = keep nothing on disk

  /// Throws InvalidArgumentError on inconsistent settings (unknown mode,
  /// injection requested in plain mode, missing files).
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  static ExperimentConfig load(const std::string& path);
};

/// Resolves a relative output directory against $ELCOREC_OUTPUT_ROOT when set.
std::string resolve_output_dir(const std::string& dir);

struct Timing {
  double gat_train_s_per_step = 0.0;
  double lm_train_s_per_step = 0.0;
  double infer_s_per_sample = 0.0;  // expert forward + LM scoring
  double total_s = 0.0;
  std::map<std::string, double> stage_s;

  nlohmann::ordered_json to_json() const;
};

struct MetricsReport {
  std::string name, mode, stages;
  std::uint64_t seed = 0;
  std::size_t n_test = 0;
  double auc = 0.0, logloss = 0.0, acc = 0.0;
  double gat_valid_auc = 0.0, gat_test_auc = 0.0;
  std::size_t gat_epochs = 0, gat_best_epoch = 0;
  std::size_t lm_train_prompts = 0, lm_steps = 0, truncated_prompts = 0;
  double prompt_len_train = 0.0, prompt_len_test = 0.0;
  nlohmann::ordered_json config;
  Timing timing;  // written to timing.json, never to metrics.json

  /// Everything except timing; identical across reruns of the same config.
  nlohmann::ordered_json to_json() const;
};

using Logger = std::function<void(const std::string&)>;

/// Data -> knowledge base -> prompts -> expert -> LM -> scores -> metrics.
/// With an output directory, every artifact is kept there (kb.bin, gat.ckpt,
/// prompts_*.jsonl, llm.ckpt, scores.jsonl, metrics.json, timing.json).
/// Stage failures raise StageError naming the stage and the directory.
MetricsReport run_experiment(const ExperimentConfig& config, const Logger& log = {});

/// Plain-text table of the headline numbers and timings (summary.txt).
std::string summary_table(const MetricsReport& rep);

/// Median of a non-empty list.
double median(std::vector<double> v);

}  // namespace elcorec::harness
