#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gat/model.hpp"
#include "lm/surrogate_lm.hpp"

namespace elcorec::lm {

struct LmTrainReport {
  std::size_t steps = 0;
  std::size_t prompts = 0;
  std::size_t truncated = 0;
  double seconds = 0.0;
  double seconds_per_step = 0.0;
  double mean_loss = 0.0;  // over the last epoch
  bool hit_time_budget = false;
  std::vector<double> step_loss;

  nlohmann::ordered_json to_json() const;
};

using LmLogger = std::function<void(const std::string&)>;

/// Vocabulary over the prompt texts and their answers.
Tokenizer build_prompt_tokenizer(const std::vector<rap::RapPrompt>& prompts);

/// Frozen expert embeddings for the prompts' samples, row-major [n x d].
std::vector<double> expert_rows(const gat::GatModel& gat, const std::vector<rap::RapPrompt>& prompts);

/// Negative log-likelihood of the answer token given the prompt; every other
/// position is masked out.
nn::Tensor answer_loss(const SurrogateLM& lm, const EncodedPrompt& p, std::span<const double> expert,
                       Rng* rng = nullptr);

/// Instruction tuning of the adapters and the expert map. The base weights
/// are frozen. `experts` holds one row per prompt (may be empty when the
/// config disables injection). A non-finite loss restores the last good
/// adapter values and raises NumericError.
LmTrainReport finetune(SurrogateLM& lm, const std::vector<rap::RapPrompt>& prompts,
                       const std::vector<double>& experts, const LmLogger& log = {});

/// p(Yes) per prompt, in prompt order.
std::vector<double> lm_score(const SurrogateLM& lm, const std::vector<rap::RapPrompt>& prompts,
                             const std::vector<double>& experts);

}  // namespace elcorec::lm
