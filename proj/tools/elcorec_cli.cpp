// Command-line front end. Talks to the library through the C API only.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "elcorec/elcorec.h"

namespace {

using json = nlohmann::ordered_json;

struct Failure {
  int code;
};

void check(elc_status s, const std::string& what) {
  if (s == ELC_OK) return;
  std::cerr << "error: " << what << ": [" << elc_status_name(s) << "] " << elc_last_error() << '\n';
  throw Failure{static_cast<int>(s)};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  elc_free_string(s);
  return out;
}

std::string read_text(const std::string& path) {
  if (path.empty()) return "";
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read " << path << '\n';
    throw Failure{ELC_ERR_IO};
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A JSON config file with command-line settings merged over it.
std::string merged(const std::string& path, const json& patch) {
  json j = path.empty() ? json::object() : json::parse(read_text(path));
  j.merge_patch(patch);
  return j.dump();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    std::cerr << "error: cannot write " << path << '\n';
    throw Failure{ELC_ERR_IO};
  }
  out << text << '\n';
}

void stderr_logger(const char* line, void*) { std::cerr << line << '\n'; }

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) out.push_back(tok);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Click-through prediction with a graph attention expert injected into a language model"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress logging");

  // synth
  std::string synth_cfg, synth_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a planted-signal synthetic dataset");
  synth->add_option("--config", synth_cfg, "Generator config JSON")->check(CLI::ExistingFile);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("-o,--out", synth_out, "Output directory")->required();

  // make-samples
  std::string ms_inter, ms_items, ms_users, ms_schema, ms_out, ms_split = "temporal";
  std::vector<double> ms_ratios = {0.8, 0.1, 0.1};
  double ms_train_ratio = 0.9;
  std::size_t ms_max_hist = 100;
  std::uint64_t ms_seed = 0;
  auto* make_samples = app.add_subcommand("make-samples", "Build train/valid/test sample files");
  make_samples->add_option("--interactions", ms_inter)->required()->check(CLI::ExistingFile);
  make_samples->add_option("--items", ms_items)->check(CLI::ExistingFile);
  make_samples->add_option("--users", ms_users)->check(CLI::ExistingFile);
  make_samples->add_option("--schema", ms_schema)->required()->check(CLI::ExistingFile);
  make_samples->add_option("--split", ms_split)->check(CLI::IsMember({"temporal", "user"}));
  make_samples->add_option("--ratios", ms_ratios)->expected(3);
  make_samples->add_option("--train-ratio", ms_train_ratio);
  make_samples->add_option("--max-history", ms_max_hist, "History entries kept per sample (0 = all)");
  make_samples->add_option("--seed", ms_seed, "User-split seed");
  make_samples->add_option("-o,--out", ms_out)->required();

  // build-kb
  std::string kb_items, kb_schema, kb_out;
  std::size_t kb_dim = 256;
  std::uint64_t kb_seed = 0;
  auto* build_kb = app.add_subcommand("build-kb", "Embed item descriptions into a knowledge base");
  build_kb->add_option("--items", kb_items)->required()->check(CLI::ExistingFile);
  build_kb->add_option("--schema", kb_schema)->required()->check(CLI::ExistingFile);
  build_kb->add_option("--dim", kb_dim);
  build_kb->add_option("--seed", kb_seed);
  build_kb->add_option("-o,--out", kb_out)->required();

  // build-prompts
  std::string bp_samples, bp_kb, bp_out, bp_mode = "rap", bp_template;
  std::size_t bp_k_ret = 15, bp_k_rec = 15, bp_k_plain = 0;
  bool bp_no_rating = false;
  auto* build_prompts = app.add_subcommand("build-prompts", "Render RAP or plain prompts for a sample file");
  build_prompts->add_option("--samples", bp_samples)->required()->check(CLI::ExistingFile);
  build_prompts->add_option("--kb", bp_kb)->required()->check(CLI::ExistingFile);
  build_prompts->add_option("--mode", bp_mode)->check(CLI::IsMember({"rap", "plain"}));
  build_prompts->add_option("--k-ret", bp_k_ret);
  build_prompts->add_option("--k-rec", bp_k_rec);
  build_prompts->add_option("--k-plain", bp_k_plain, "Plain-mode lines (0 = k-ret + k-rec)");
  build_prompts->add_flag("--no-rating", bp_no_rating, "Leave ratings out of the prompt text");
  build_prompts->add_option("--template", bp_template)->check(CLI::ExistingFile);
  build_prompts->add_option("-o,--out", bp_out)->required();

  // train-gat
  std::string tg_train, tg_valid, tg_cfg, tg_out, tg_report;
  std::uint64_t tg_seed = 0;
  auto* train_gat = app.add_subcommand("train-gat", "Train the graph attention expert");
  train_gat->add_option("--train", tg_train)->required()->check(CLI::ExistingFile);
  train_gat->add_option("--valid", tg_valid)->required()->check(CLI::ExistingFile);
  train_gat->add_option("--config", tg_cfg)->check(CLI::ExistingFile);
  auto* tg_seed_opt = train_gat->add_option("--seed", tg_seed);
  train_gat->add_option("--report", tg_report, "Write the training report JSON here");
  train_gat->add_option("-o,--out", tg_out)->required();

  // gat-embed
  std::string ge_ckpt, ge_samples, ge_out, ge_scores;
  auto* gat_embed = app.add_subcommand("gat-embed", "Export target-item expert embeddings");
  gat_embed->add_option("--gat", ge_ckpt)->required()->check(CLI::ExistingFile);
  gat_embed->add_option("--samples", ge_samples)->required()->check(CLI::ExistingFile);
  gat_embed->add_option("--scores", ge_scores, "Also write the expert's own click scores");
  gat_embed->add_option("-o,--out", ge_out)->required();

  // train-llm
  std::string tl_prompts, tl_gat, tl_cfg, tl_out, tl_report;
  std::uint64_t tl_seed = 0;
  bool tl_no_inject = false;
  auto* train_llm = app.add_subcommand("train-llm", "Instruction-tune the LM adapters");
  train_llm->add_option("--prompts", tl_prompts)->required()->check(CLI::ExistingFile);
  train_llm->add_option("--gat", tl_gat)->check(CLI::ExistingFile);
  train_llm->add_option("--config", tl_cfg)->check(CLI::ExistingFile);
  auto* tl_seed_opt = train_llm->add_option("--seed", tl_seed);
  train_llm->add_flag("--no-inject", tl_no_inject, "Train without the expert embedding");
  train_llm->add_option("--report", tl_report);
  train_llm->add_option("-o,--out", tl_out)->required();

  // infer
  std::string in_llm, in_gat, in_prompts, in_out;
  auto* infer = app.add_subcommand("infer", "Score prompts with a tuned LM");
  infer->add_option("--llm", in_llm)->required()->check(CLI::ExistingFile);
  infer->add_option("--gat", in_gat)->check(CLI::ExistingFile);
  infer->add_option("--prompts", in_prompts)->required()->check(CLI::ExistingFile);
  infer->add_option("-o,--out", in_out)->required();

  // eval
  std::string ev_scores, ev_out;
  auto* eval = app.add_subcommand("eval", "AUC, log loss and accuracy of a scores file");
  eval->add_option("--scores", ev_scores)->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--out", ev_out, "Write metrics JSON here");

  // run
  std::string run_cfg, run_set, run_out;
  std::uint64_t run_seed = 0;
  auto* run = app.add_subcommand("run", "Run a whole experiment from a config");
  run->add_option("config", run_cfg)->required()->check(CLI::ExistingFile);
  run->add_option("--set", run_set, "JSON merge patch applied to the config");
  auto* run_seed_opt = run->add_option("--seed", run_seed);
  run->add_option("--output-dir", run_out);

  // bench
  std::string bench_cfg, bench_set;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "Run an experiment and print per-stage timings");
  bench->add_option("config", bench_cfg)->required()->check(CLI::ExistingFile);
  bench->add_option("--set", bench_set);
  auto* bench_seed_opt = bench->add_option("--seed", bench_seed);

  // sweep
  std::string sw_cfg, sw_values, sw_key = "train_budget", sw_out, sw_seeds = "0";
  auto* sweep = app.add_subcommand("sweep", "Vary one config key and tabulate AUC as CSV");
  sweep->add_option("config", sw_cfg)->required()->check(CLI::ExistingFile);
  sweep->add_option("--key", sw_key, "Top-level config key to vary");
  sweep->add_option("--values", sw_values, "Comma-separated values, e.g. 250,500,1000")->required();
  sweep->add_option("--seeds", sw_seeds, "Comma-separated seeds");
  sweep->add_option("-o,--out", sw_out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);
  if (!quiet) elc_set_logger(stderr_logger, nullptr);

  try {
    if (*synth) {
      json patch = json::object();
      if (synth->count("--seed")) patch["seed"] = synth_seed;
      check(elc_synth_write(merged(synth_cfg, patch).c_str(), synth_out.c_str()), "synth");
      std::cout << "wrote " << synth_out << '\n';
    } else if (*make_samples) {
      json opts = {{"split", ms_split}, {"ratios", ms_ratios}, {"train_ratio", ms_train_ratio},
                   {"seed", ms_seed},   {"max_history", ms_max_hist}};
      size_t n[3] = {0, 0, 0};
      check(elc_make_samples(ms_inter.c_str(), ms_items.c_str(), ms_users.c_str(), ms_schema.c_str(),
                             opts.dump().c_str(), ms_out.c_str(), n),
            "make-samples");
      std::cout << "train " << n[0] << " valid " << n[1] << " test " << n[2] << '\n';
    } else if (*build_kb) {
      elc_kb* kb = nullptr;
      check(elc_kb_build(kb_items.c_str(), kb_schema.c_str(), kb_dim, kb_seed, &kb), "build-kb");
      size_t n = 0;
      elc_status s = elc_kb_save(kb, kb_out.c_str());
      if (s == ELC_OK) s = elc_kb_size(kb, &n);
      elc_kb_free(kb);
      check(s, "build-kb");
      std::cout << n << " items -> " << kb_out << '\n';
    } else if (*build_prompts) {
      elc_kb* kb = nullptr;
      check(elc_kb_load(bp_kb.c_str(), &kb), "load kb");
      json opts = {{"mode", bp_mode}, {"k_ret", bp_k_ret}, {"k_rec", bp_k_rec}, {"show_rating", !bp_no_rating}};
      if (bp_k_plain > 0) opts["k_plain"] = bp_k_plain;
      if (!bp_template.empty()) opts["template"] = bp_template;
      size_t n = 0;
      const elc_status s = elc_build_prompts(bp_samples.c_str(), kb, opts.dump().c_str(), bp_out.c_str(), &n);
      elc_kb_free(kb);
      check(s, "build-prompts");
      std::cout << n << " prompts -> " << bp_out << '\n';
    } else if (*train_gat) {
      json patch = json::object();
      if (tg_seed_opt->count()) patch["seed"] = tg_seed;
      elc_gat* gat = nullptr;
      char* report = nullptr;
      check(elc_gat_train(tg_train.c_str(), tg_valid.c_str(), merged(tg_cfg, patch).c_str(), &gat, &report),
            "train-gat");
      const std::string rep = take(report);
      const elc_status s = elc_gat_save(gat, tg_out.c_str());
      elc_gat_free(gat);
      check(s, "save gat");
      if (!tg_report.empty()) write_text(tg_report, json::parse(rep).dump(2));
      std::cout << json::parse(rep).dump(2) << '\n';
    } else if (*gat_embed) {
      elc_gat* gat = nullptr;
      check(elc_gat_load(ge_ckpt.c_str(), &gat), "load gat");
      size_t n = 0;
      elc_status s = elc_gat_embed(gat, ge_samples.c_str(), ge_out.c_str(), &n);
      if (s == ELC_OK && !ge_scores.empty()) s = elc_gat_predict(gat, ge_samples.c_str(), ge_scores.c_str(), &n);
      elc_gat_free(gat);
      check(s, "gat-embed");
      std::cout << n << " embeddings -> " << ge_out << '\n';
    } else if (*train_llm) {
      json patch = json::object();
      if (tl_seed_opt->count()) patch["seed"] = tl_seed;
      if (tl_no_inject) patch["inject"] = false;
      elc_gat* gat = nullptr;
      if (!tl_gat.empty()) check(elc_gat_load(tl_gat.c_str(), &gat), "load gat");
      elc_lm* lm = nullptr;
      char* report = nullptr;
      const elc_status s = elc_lm_train(tl_prompts.c_str(), gat, merged(tl_cfg, patch).c_str(), &lm, &report);
      elc_gat_free(gat);
      check(s, "train-llm");
      const std::string rep = take(report);
      const elc_status s2 = elc_lm_save(lm, tl_out.c_str());
      elc_lm_free(lm);
      check(s2, "save llm");
      json r = json::parse(rep);
      r.erase("step_loss");
      if (!tl_report.empty()) write_text(tl_report, json::parse(rep).dump(2));
      std::cout << r.dump(2) << '\n';
    } else if (*infer) {
      elc_lm* lm = nullptr;
      check(elc_lm_load(in_llm.c_str(), &lm), "load llm");
      elc_gat* gat = nullptr;
      elc_status s = in_gat.empty() ? ELC_OK : elc_gat_load(in_gat.c_str(), &gat);
      size_t n = 0;
      if (s == ELC_OK) s = elc_lm_infer(lm, gat, in_prompts.c_str(), in_out.c_str(), &n);
      elc_gat_free(gat);
      elc_lm_free(lm);
      check(s, "infer");
      std::cout << n << " scores -> " << in_out << '\n';
    } else if (*eval) {
      char* metrics = nullptr;
      check(elc_eval_scores(ev_scores.c_str(), &metrics), "eval");
      const std::string m = json::parse(take(metrics)).dump(2);
      if (!ev_out.empty()) write_text(ev_out, m);
      std::cout << m << '\n';
    } else if (*run) {
      json patch = run_set.empty() ? json::object() : json::parse(run_set);
      if (run_seed_opt->count()) patch["seed"] = run_seed;
      if (!run_out.empty()) patch["output_dir"] = run_out;
      char* result = nullptr;
      check(elc_run_experiment(run_cfg.c_str(), patch.dump().c_str(), &result), "run");
      std::cout << json::parse(take(result))["metrics"].dump(2) << '\n';
    } else if (*bench) {
      json patch = bench_set.empty() ? json::object() : json::parse(bench_set);
      if (bench_seed_opt->count()) patch["seed"] = bench_seed;
      char* result = nullptr;
      check(elc_run_experiment(bench_cfg.c_str(), patch.dump().c_str(), &result), "bench");
      const json r = json::parse(take(result));
      const json& t = r["timing"];
      std::printf("%-28s %14s\n", "measure", "value");
      std::printf("%-28s %14.6f\n", "gat s/step", t.value("gat_train_s_per_step", 0.0));
      std::printf("%-28s %14.6f\n", "llm s/step", t.value("lm_train_s_per_step", 0.0));
      std::printf("%-28s %14.6f\n", "infer s/sample", t.value("infer_s_per_sample", 0.0));
      if (t.contains("stage_s"))
        for (const auto& [k, v] : t["stage_s"].items()) std::printf("%-28s %14.3f\n", ("stage " + k + " s").c_str(), v.get<double>());
      std::printf("%-28s %14.3f\n", "total s", t.value("total_s", 0.0));
      std::printf("%-28s %14.4f\n", "auc", r["metrics"].value("auc", 0.0));
    } else if (*sweep) {
      std::ostringstream csv;
      csv << sw_key << ",seed,auc,logloss,acc,n_test\n";
      std::vector<double> medians;
      for (const auto& v : split_csv(sw_values)) {
        std::vector<double> aucs;
        for (const auto& seed : split_csv(sw_seeds)) {
          json patch = {{"seed", std::stoull(seed)}};
          try {
            patch[sw_key] = json::parse(v);
          } catch (const json::exception&) {
            patch[sw_key] = v;
          }
          char* result = nullptr;
          check(elc_run_experiment(sw_cfg.c_str(), patch.dump().c_str(), &result), "sweep " + sw_key + "=" + v);
          const json m = json::parse(take(result))["metrics"];
          csv << v << ',' << seed << ',' << m["auc"].get<double>() << ',' << m["logloss"].get<double>() << ','
              << m["acc"].get<double>() << ',' << m["n_test"].get<std::size_t>() << '\n';
          std::cerr << sw_key << "=" << v << " seed=" << seed << " auc=" << m["auc"].get<double>() << '\n';
          aucs.push_back(m["auc"].get<double>());
        }
        std::sort(aucs.begin(), aucs.end());
        const std::size_t h = aucs.size() / 2;
        medians.push_back(aucs.size() % 2 ? aucs[h] : 0.5 * (aucs[h - 1] + aucs[h]));
      }
      const bool monotone = std::is_sorted(medians.begin(), medians.end());
      std::cerr << "median auc trend over " << sw_key << ": " << (monotone ? "non-decreasing" : "not monotone") << '\n';
      if (sw_out.empty())
        std::cout << csv.str();
      else
        write_text(sw_out, csv.str());
    }
  } catch (const Failure& f) {
    return f.code;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad JSON: " << e.what() << '\n';
    return ELC_ERR_FORMAT;
  }
  return 0;
}
