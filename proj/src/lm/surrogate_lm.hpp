#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "lm/tokenizer.hpp"
#include "numerics/param_store.hpp"
#include "rap/rap_builder.hpp"

namespace elcorec::lm {

struct LmConfig {
  std::size_t d = 128;
  std::size_t blocks = 4;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  std::size_t max_len = 1024;
  std::size_t d_gat = 32;
  std::size_t lora_r = 8;
  double lora_alpha = 16.0;
  double lora_dropout = 0.05;
  // finetuning
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  std::size_t max_train_prompts = 0;  // 0 = all
  double time_budget_s = 0.0;         // 0 = unlimited
  bool inject = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

/// Token ids of one prompt as the LM sees it: <bos>, the prompt words, and
/// the answer id kept aside as the training target.
struct EncodedPrompt {
  std::string id;
  std::vector<std::size_t> ids;
  std::optional<std::size_t> placeholder_pos;
  std::size_t answer_id = Tokenizer::kNoId;
  int label = 0;
  bool truncated = false;
  std::size_t dropped_lines = 0;
};

/// Tokenizes a prompt. When it would exceed `max_len` positions, whole
/// history lines are dropped from the front (retrieved section first, then
/// recent) until it fits; preamble, placeholder and question always survive.
/// Throws InvalidArgumentError if even that is not enough.
EncodedPrompt encode_prompt(const rap::RapPrompt& prompt, const Tokenizer& tokenizer, std::size_t max_len);

/// Small pre-LN decoder-only transformer with learned positions and an output
/// layer tied to the token table. The base weights live in `base()`; the
/// Q/V low-rank adapters and the expert map live in `adapter()`.
class SurrogateLM {
 public:
  SurrogateLM(LmConfig config, Tokenizer tokenizer);

  const LmConfig& config() const { return config_; }
  LmConfig& config() { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  nn::ParamStore& base() { return base_; }
  const nn::ParamStore& base() const { return base_; }
  nn::ParamStore& adapter() { return adapter_; }
  const nn::ParamStore& adapter() const { return adapter_; }

  /// E = token embeddings plus positional embeddings, [L x d].
  nn::Tensor embed(const std::vector<std::size_t>& ids) const;
  /// map(expert) = expert * W + b, [d_gat] -> [d].
  nn::Tensor map_expert(const nn::Tensor& expert) const;
  /// E with row `pos` replaced by map(expert). Throws InjectionError when pos
  /// is missing or out of range and DimensionError on a wrong expert width.
  nn::Tensor inject(const nn::Tensor& e, std::optional<std::size_t> pos, const nn::Tensor& expert) const;

  /// Final (normalized) hidden states [L x d]. `rng` enables adapter dropout;
  /// pass nullptr for evaluation. `use_lora = false` runs the bare base.
  nn::Tensor hidden(const nn::Tensor& e_hid, Rng* rng = nullptr, bool use_lora = true) const;
  /// Next-token logits at every position, [L x V].
  nn::Tensor logits(const nn::Tensor& e_hid, Rng* rng = nullptr, bool use_lora = true) const;
  /// Next-token logits at the last position only, [1 x V].
  nn::Tensor last_logits(const nn::Tensor& e_hid, Rng* rng = nullptr, bool use_lora = true) const;

  /// E_hid for one prompt: embed, then inject when configured and the prompt
  /// has a placeholder. `expert` may be empty when injection is off.
  nn::Tensor prepare(const EncodedPrompt& p, std::span<const double> expert) const;

  /// Adapter and map scalars.
  std::size_t trainable_count() const { return adapter_.scalar_count(); }

  void save(const std::string& path) const;
  static SurrogateLM load(const std::string& path);

 private:
  nn::Tensor block(const nn::Tensor& x, std::size_t b, Rng* rng, bool use_lora) const;

  LmConfig config_;
  Tokenizer tokenizer_;
  nn::ParamStore base_;
  nn::ParamStore adapter_;
};

/// p(Yes) from the two-way softmax over the Yes/No logits of a [1 x V] row,
/// i.e. sigmoid(logit_Yes - logit_No).
double score_yes_no(const nn::Tensor& last_logits);

}  // namespace elcorec::lm
