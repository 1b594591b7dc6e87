#include "lm/finetune.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <numeric>

#include "common/error.hpp"
#include "gat/train.hpp"
#include "numerics/ops.hpp"

namespace elcorec::lm {
namespace {

std::span<const double> expert_row(const std::vector<double>& experts, std::size_t i, std::size_t d) {
  if (experts.empty()) return {};
  return {experts.data() + i * d, d};
}

void check_experts(const SurrogateLM& lm, const std::vector<rap::RapPrompt>& prompts,
                   const std::vector<double>& experts) {
  if (!lm.config().inject) return;
  if (experts.size() != prompts.size() * lm.config().d_gat)
    throw DimensionError("lm: expected " + std::to_string(prompts.size()) + " expert rows of width " +
                         std::to_string(lm.config().d_gat));
}

}  // namespace

nlohmann::ordered_json LmTrainReport::to_json() const {
  return {{"steps", steps},         {"prompts", prompts},     {"truncated", truncated},
          {"mean_loss", mean_loss}, {"hit_time_budget", hit_time_budget}};
}

Tokenizer build_prompt_tokenizer(const std::vector<rap::RapPrompt>& prompts) {
  if (prompts.empty()) throw InvalidArgumentError("cannot build a vocabulary from zero prompts");
  std::vector<std::string> corpus;
  corpus.reserve(prompts.size());
  for (const auto& p : prompts) corpus.push_back(p.text + "\n" + p.answer);
  return Tokenizer::build(corpus);
}

std::vector<double> expert_rows(const gat::GatModel& gat, const std::vector<rap::RapPrompt>& prompts) {
  std::vector<data::Sample> samples;
  samples.reserve(prompts.size());
  for (const auto& p : prompts) samples.push_back(p.sample);
  return gat::gat_embed(gat, samples);
}

nn::Tensor answer_loss(const SurrogateLM& lm, const EncodedPrompt& p, std::span<const double> expert, Rng* rng) {
  const std::size_t target = p.answer_id;
  return nn::cross_entropy(lm.last_logits(lm.prepare(p, expert), rng), std::span<const std::size_t>(&target, 1));
}

LmTrainReport finetune(SurrogateLM& lm, const std::vector<rap::RapPrompt>& prompts,
                       const std::vector<double>& experts, const LmLogger& log) {
  if (prompts.empty()) throw InvalidArgumentError("finetune needs at least one prompt");
  check_experts(lm, prompts, experts);
  const auto& cfg = lm.config();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  Rng rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);
  std::vector<std::size_t> pick(prompts.size());
  std::iota(pick.begin(), pick.end(), 0);
  if (cfg.max_train_prompts > 0 && cfg.max_train_prompts < pick.size()) {
    rng.shuffle(pick);
    pick.resize(cfg.max_train_prompts);
    std::sort(pick.begin(), pick.end());
  }
  LmTrainReport report;
  std::vector<EncodedPrompt> encoded;
  for (auto i : pick) {
    encoded.push_back(encode_prompt(prompts[i], lm.tokenizer(), cfg.max_len));
    report.truncated += encoded.back().truncated;
  }
  report.prompts = encoded.size();

  lm.base().set_trainable(false);
  auto& params = lm.adapter();
  params.set_trainable(true);
  nn::AdamW opt{cfg.lr, cfg.weight_decay};
  double step_seconds = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !report.hit_time_budget; ++epoch) {
    std::vector<std::size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const auto good = params.snapshot();
      params.zero_grad();
      std::vector<nn::Tensor> terms;
      for (std::size_t i = b; i < e; ++i)
        terms.push_back(answer_loss(lm, encoded[order[i]], expert_row(experts, pick[order[i]], cfg.d_gat), &rng));
      nn::Tensor loss = nn::scale(nn::add_n(terms), 1.0 / static_cast<double>(e - b));
      const double v = loss.item();
      if (!std::isfinite(v)) {
        params.restore(good);
        throw NumericError("finetune: non-finite loss at step " + std::to_string(report.steps + 1) +
                           "; adapters restored to the previous step");
      }
      loss.backward();
      opt.step(params);
      ++report.steps;
      report.step_loss.push_back(v);
      epoch_loss += v * static_cast<double>(e - b);
      seen += e - b;
      step_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (log && report.steps % 20 == 0)
        log("step " + std::to_string(report.steps) + " loss " + std::to_string(epoch_loss / static_cast<double>(seen)) +
            " t=" + std::to_string(elapsed()) + "s");
      if (cfg.time_budget_s > 0.0 && elapsed() > cfg.time_budget_s) {
        report.hit_time_budget = true;
        break;
      }
    }
    report.mean_loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
  }
  params.zero_grad();
  report.seconds = elapsed();
  report.seconds_per_step = report.steps ? step_seconds / static_cast<double>(report.steps) : 0.0;
  return report;
}

std::vector<double> lm_score(const SurrogateLM& lm, const std::vector<rap::RapPrompt>& prompts,
                             const std::vector<double>& experts) {
  check_experts(lm, prompts, experts);
  nn::NoGradGuard guard;
  std::vector<double> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto p = encode_prompt(prompts[i], lm.tokenizer(), lm.config().max_len);
    out.push_back(score_yes_no(lm.last_logits(lm.prepare(p, expert_row(experts, i, lm.config().d_gat)))));
  }
  return out;
}

}  // namespace elcorec::lm
