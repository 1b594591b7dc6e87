#include "harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "dataset/dataset.hpp"
#include "gat/train.hpp"
#include "harness/metrics.hpp"
#include "harness/report_io.hpp"
#include "kb/knowledge_base.hpp"
#include "lm/finetune.hpp"
#include "rap/rap_builder.hpp"

namespace elcorec::harness {

namespace fs = std::filesystem;

// ---- config ---------------------------------------------------------------

nlohmann::ordered_json DatasetSpec::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  if (kind == "synthetic") {
    j["synth"] = synth.to_json();
  } else {
    j["interactions"] = interactions;
    j["items"] = items;
    j["users"] = users;
    j["schema"] = schema;
  }
  return j;
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec d;
  d.kind = j.value("kind", d.kind);
  if (d.kind == "synthetic") {
    if (j.contains("synth")) d.synth = data::SynthConfig::from_json(j.at("synth"));
  } else if (d.kind == "files") {
    d.interactions = j.at("interactions").get<std::string>();
    d.items = j.value("items", "");
    d.users = j.value("users", "");
    d.schema = j.at("schema").get<std::string>();
  } else {
    throw InvalidArgumentError("dataset kind must be 'synthetic' or 'files', got '" + d.kind + "'");
  }
  return d;
}

void ExperimentConfig::validate() const {
  if (mode != "rap" && mode != "plain") throw InvalidArgumentError("mode must be 'rap' or 'plain'");
  if (stages != "gat" && stages != "full") throw InvalidArgumentError("stages must be 'gat' or 'full'");
  if (split != "temporal" && split != "user") throw InvalidArgumentError("split must be 'temporal' or 'user'");
  if (mode == "plain" && lm.inject) throw InvalidArgumentError("plain mode has no placeholder; set lm.inject to false");
  if (k_ret + k_rec == 0) throw InvalidArgumentError("k_ret + k_rec must be positive");
  if (dataset.kind == "files") {
    for (const auto* p : {&dataset.interactions, &dataset.schema, &dataset.items, &dataset.users})
      if (!p->empty() && !fs::exists(*p)) throw InvalidArgumentError("dataset file not found: " + *p);
  }
  gat.validate();
  lm.validate();
  if (lm.d_gat != gat.d) throw InvalidArgumentError("lm.d_gat must equal gat.d");
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["dataset"] = dataset.to_json();
  j["split"] = split;
  j["ratios"] = ratios;
  j["user_train_ratio"] = user_train_ratio;
  j["mode"] = mode;
  j["stages"] = stages;
  j["k_ret"] = k_ret;
  j["k_rec"] = k_rec;
  j["k_plain"] = k_plain;
  j["show_rating"] = show_rating;
  j["kb_dim"] = kb_dim;
  j["train_budget"] = train_budget;
  j["test_budget"] = test_budget;
  j["gat"] = gat.to_json();
  j["lm"] = lm.to_json();
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw FormatError("experiment config must be a JSON object");
  ExperimentConfig c;
  const auto known = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw FormatError("experiment config: unknown key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("name", c.name);
  if (j.contains("dataset")) c.dataset = DatasetSpec::from_json(j.at("dataset"));
  // relative dataset paths that do not exist as given are tried against base_dir
  if (c.dataset.kind == "files" && !base_dir.empty()) {
    for (auto* p : {&c.dataset.interactions, &c.dataset.items, &c.dataset.users, &c.dataset.schema})
      if (!p->empty() && fs::path(*p).is_relative() && !fs::exists(*p))
        *p = (fs::path(base_dir) / *p).lexically_normal().string();
  }
  get("split", c.split);
  get("ratios", c.ratios);
  get("user_train_ratio", c.user_train_ratio);
  get("mode", c.mode);
  get("stages", c.stages);
  get("k_ret", c.k_ret);
  get("k_rec", c.k_rec);
  get("k_plain", c.k_plain);
  get("show_rating", c.show_rating);
  get("kb_dim", c.kb_dim);
  get("train_budget", c.train_budget);
  get("test_budget", c.test_budget);
  if (j.contains("gat")) c.gat = gat::GatConfig::from_json(j.at("gat"));
  if (j.contains("lm")) {
    c.lm = lm::LmConfig::from_json(j.at("lm"));
    if (!j.at("lm").contains("d_gat")) c.lm.d_gat = c.gat.d;
  } else {
    c.lm.d_gat = c.gat.d;
  }
  // plain mode carries no placeholder, so injection defaults to off there
  if (c.mode == "plain" && !(j.contains("lm") && j.at("lm").contains("inject"))) c.lm.inject = false;
  get("seed", c.seed);
  get("output_dir", c.output_dir);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json(read_json(path), fs::path(path).parent_path().string());
}

std::string resolve_output_dir(const std::string& dir) {
  if (dir.empty() || fs::path(dir).is_absolute()) return dir;
  if (const char* root = std::getenv("ELCOREC_OUTPUT_ROOT"); root && *root) return (fs::path(root) / dir).string();
  return dir;
}

nlohmann::ordered_json Timing::to_json() const {
  nlohmann::ordered_json j;
  j["gat_train_s_per_step"] = gat_train_s_per_step;
  j["lm_train_s_per_step"] = lm_train_s_per_step;
  j["infer_s_per_sample"] = infer_s_per_sample;
  j["total_s"] = total_s;
  j["stage_s"] = stage_s;
  return j;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["mode"] = mode;
  j["stages"] = stages;
  j["seed"] = seed;
  j["n_test"] = n_test;
  j["auc"] = auc;
  j["logloss"] = logloss;
  j["acc"] = acc;
  if (gat_epochs > 0)
    j["gat"] = {{"valid_auc", gat_valid_auc},
                {"test_auc", gat_test_auc},
                {"epochs", gat_epochs},
                {"best_epoch", gat_best_epoch}};
  else
    j["gat"] = nullptr;  // expert not trained
  j["lm"] = {{"train_prompts", lm_train_prompts}, {"steps", lm_steps}, {"truncated_prompts", truncated_prompts}};
  j["prompt_len"] = {{"train_mean", prompt_len_train}, {"test_mean", prompt_len_test}};
  j["config"] = config;
  return j;
}

std::string summary_table(const MetricsReport& rep) {
  std::string out;
  auto row = [&](const std::string& k, const std::string& v) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-26s %s\n", k.c_str(), v.c_str());
    out += buf;
  };
  auto num = [](double v, const char* f = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return std::string(buf);
  };
  row("experiment", rep.name);
  row("mode / stages", rep.mode + " / " + rep.stages);
  row("seed", std::to_string(rep.seed));
  row("test samples", std::to_string(rep.n_test));
  row("auc", num(rep.auc));
  row("logloss", num(rep.logloss));
  row("acc", num(rep.acc));
  if (rep.gat_epochs > 0) {
    row("gat valid auc", num(rep.gat_valid_auc));
    row("gat test auc", num(rep.gat_test_auc));
    row("gat epochs (best)", std::to_string(rep.gat_epochs) + " (" + std::to_string(rep.gat_best_epoch) + ")");
  }
  if (rep.stages == "full") {
    row("lm prompts / steps", std::to_string(rep.lm_train_prompts) + " / " + std::to_string(rep.lm_steps));
    row("prompt tokens train/test", num(rep.prompt_len_train, "%.1f") + " / " + num(rep.prompt_len_test, "%.1f"));
    row("truncated prompts", std::to_string(rep.truncated_prompts));
  }
  row("gat s/step", num(rep.timing.gat_train_s_per_step));
  row("lm s/step", num(rep.timing.lm_train_s_per_step));
  row("infer s/sample", num(rep.timing.infer_s_per_sample));
  for (const auto& [stage, s] : rep.timing.stage_s) row("stage " + stage + " s", num(s, "%.2f"));
  row("total s", num(rep.timing.total_s, "%.2f"));
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgumentError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- pipeline ---------------------------------------------------------------

namespace {

constexpr std::uint64_t kSubsetSeed = 0x5eed5eedULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// First n of a fixed shuffle, back in original order. Independent of the
// model seed so every arm sees the same samples.
std::vector<data::Sample> subset(const std::vector<data::Sample>& all, std::size_t n, std::uint64_t salt) {
  if (n == 0 || n >= all.size()) return all;
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(kSubsetSeed ^ salt);
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<data::Sample> out;
  out.reserve(n);
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

double mean_prompt_length(const std::vector<rap::RapPrompt>& prompts, const lm::Tokenizer& tok) {
  if (prompts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : prompts) total += static_cast<double>(rap::prompt_token_length(p.text, tok));
  return total / static_cast<double>(prompts.size());
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& input, const Logger& log) {
  ExperimentConfig cfg = input;
  cfg.validate();
  cfg.gat.seed = cfg.seed;
  cfg.lm.seed = cfg.seed;
  const std::string dir = resolve_output_dir(cfg.output_dir);
  if (!dir.empty()) fs::create_directories(dir);
  auto path = [&](const std::string& f) { return (fs::path(dir) / f).string(); };
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  MetricsReport rep;
  rep.name = cfg.name;
  rep.mode = cfg.mode;
  rep.stages = cfg.stages;
  rep.seed = cfg.seed;
  rep.config = cfg.to_json();
  rep.config.erase("output_dir");  // where artifacts go is not part of the result
  const auto start = Clock::now();

  auto stage = [&](const std::string& name, auto&& fn) {
    const auto t0 = Clock::now();
    say("[" + name + "]");
    try {
      fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError("stage '" + name + "' failed: " + e.what() +
                       (dir.empty() ? std::string() : " (artifacts kept in " + dir + ")"));
    }
    rep.timing.stage_s[name] = seconds_since(t0);
  };

  data::Dataset dataset;
  data::TemporalSplit split;
  int threshold = 3;
  stage("load-data", [&] {
    if (cfg.dataset.kind == "synthetic") {
      dataset = data::synth_generate(cfg.dataset.synth).data;
    } else {
      const auto schema = data::load_schema(cfg.dataset.schema);
      threshold = schema.rating_threshold;
      dataset = data::load_dataset(cfg.dataset.interactions, cfg.dataset.items, cfg.dataset.users, schema);
      if (dataset.report.malformed > 0) say(dataset.report.summary());
    }
    const auto samples = data::build_samples(dataset.records, dataset.catalog, threshold);
    if (cfg.split == "temporal") {
      split = data::split_temporal(samples, cfg.ratios);
    } else {
      // whole users held out; validation is carved from the training users
      auto outer = data::split_by_user(samples, cfg.user_train_ratio, cfg.dataset.synth.seed);
      auto inner = data::split_by_user(outer.train, cfg.user_train_ratio, cfg.dataset.synth.seed + 1);
      split.train = std::move(inner.train);
      split.valid = std::move(inner.test);
      split.test = std::move(outer.test);
    }
    for (const auto& w : split.warnings) say("warning: " + w);
    say("samples " + std::to_string(samples.size()) + " train " + std::to_string(split.train.size()) + " valid " +
        std::to_string(split.valid.size()) + " test " + std::to_string(split.test.size()));
  });

  const auto test = subset(split.test, cfg.test_budget, 2);
  std::vector<int> test_labels;
  for (const auto& s : test) test_labels.push_back(s.label);
  rep.n_test = test.size();

  std::optional<gat::GatModel> expert;
  // a full run without injection never consults the expert
  const bool need_expert = cfg.stages == "gat" || cfg.lm.inject;
  if (need_expert) stage("train-gat", [&] {
    expert.emplace(gat::make_gat(cfg.gat, split.train));
    const auto r = gat::train_gat(*expert, split.train, split.valid, log);
    rep.gat_valid_auc = r.best_valid_auc;
    rep.gat_epochs = r.epochs;
    rep.gat_best_epoch = r.best_epoch;
    rep.timing.gat_train_s_per_step = r.seconds_per_step;
    std::vector<int> y;
    for (const auto& s : split.test) y.push_back(s.label);
    rep.gat_test_auc = auc(y, gat::gat_predict(*expert, split.test));
    say("gat valid_auc " + std::to_string(rep.gat_valid_auc) + " test_auc " + std::to_string(rep.gat_test_auc));
    if (!dir.empty()) {
      expert->save(path("gat.ckpt"));
      write_json(path("gat_report.json"), r.to_json());
    }
  });

  std::vector<double> scores;
  if (cfg.stages == "gat") {
    stage("infer", [&] {
      const auto t0 = Clock::now();
      scores = gat::gat_predict(*expert, test);
      rep.timing.infer_s_per_sample = seconds_since(t0) / static_cast<double>(std::max<std::size_t>(1, test.size()));
    });
  } else {
    kb::KnowledgeBase kbase;
    stage("build-kb", [&] {
      kbase = kb::build_kb(dataset.catalog.items, cfg.kb_dim);
      if (!dir.empty()) kbase.save(path("kb.bin"));
    });

    std::vector<rap::RapPrompt> train_prompts, test_prompts;
    stage("build-prompts", [&] {
      const rap::RapOptions opt{cfg.k_ret, cfg.k_rec, cfg.show_rating};
      const std::size_t k_plain = cfg.k_plain ? cfg.k_plain : cfg.k_ret + cfg.k_rec;
      auto make = [&](const data::Sample& s) {
        return cfg.mode == "rap" ? rap::build_rap_prompt(s, kbase, opt)
                                 : rap::build_plain_prompt(s, kbase, k_plain, cfg.show_rating);
      };
      for (const auto& s : subset(split.train, cfg.train_budget, 1)) train_prompts.push_back(make(s));
      for (const auto& s : test) test_prompts.push_back(make(s));
      if (!dir.empty()) {
        rap::write_prompts(path("prompts_train.jsonl"), train_prompts);
        rap::write_prompts(path("prompts_test.jsonl"), test_prompts);
      }
    });

    std::optional<lm::SurrogateLM> model;
    stage("train-llm", [&] {
      auto tok = lm::build_prompt_tokenizer(train_prompts);
      rep.prompt_len_train = mean_prompt_length(train_prompts, tok);
      rep.prompt_len_test = mean_prompt_length(test_prompts, tok);
      model.emplace(cfg.lm, std::move(tok));
      const auto experts = cfg.lm.inject ? lm::expert_rows(*expert, train_prompts) : std::vector<double>{};
      const auto r = lm::finetune(*model, train_prompts, experts, log);
      rep.lm_train_prompts = r.prompts;
      rep.lm_steps = r.steps;
      rep.truncated_prompts = r.truncated;
      rep.timing.lm_train_s_per_step = r.seconds_per_step;
      if (!dir.empty()) model->save(path("llm.ckpt"));
    });

    stage("infer", [&] {
      const auto t0 = Clock::now();
      const auto experts = cfg.lm.inject ? lm::expert_rows(*expert, test_prompts) : std::vector<double>{};
      scores = lm::lm_score(*model, test_prompts, experts);
      rep.timing.infer_s_per_sample = seconds_since(t0) / static_cast<double>(std::max<std::size_t>(1, test.size()));
    });
  }

  stage("eval", [&] {
    rep.auc = auc(test_labels, scores);
    rep.logloss = logloss(test_labels, scores);
    rep.acc = accuracy(test_labels, scores);
    rep.timing.total_s = seconds_since(start);
    if (!dir.empty()) {
      std::vector<ScoreRow> rows;
      for (std::size_t i = 0; i < test.size(); ++i) rows.push_back({test[i].id, scores[i], test[i].label});
      write_scores(path("scores.jsonl"), rows);
      write_json(path("metrics.json"), rep.to_json());
      write_json(path("timing.json"), rep.timing.to_json());
    }
  });
  if (!dir.empty()) {
    std::ofstream out(path("summary.txt"));
    out << summary_table(rep);
  }
  say("auc " + std::to_string(rep.auc) + " logloss " + std::to_string(rep.logloss) + " acc " +
      std::to_string(rep.acc));
  return rep;
}

}  // namespace elcorec::harness
