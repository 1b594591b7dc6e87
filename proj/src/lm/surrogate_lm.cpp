#include "lm/surrogate_lm.hpp"

#include <cmath>

#include "common/error.hpp"
#include "common/hash.hpp"
#include "numerics/checkpoint.hpp"
#include "numerics/ops.hpp"

namespace elcorec::lm {

using nn::Tensor;

void LmConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) throw InvalidArgumentError("lm: d must be divisible by heads");
  if (blocks == 0 || ff_mult == 0) throw InvalidArgumentError("lm: blocks and ff_mult must be >= 1");
  if (max_len < 8) throw InvalidArgumentError("lm: max_len must be >= 8");
  if (d_gat == 0) throw InvalidArgumentError("lm: d_gat must be >= 1");
  if (lora_r == 0 || !(lora_alpha > 0.0)) throw InvalidArgumentError("lm: lora rank and alpha must be positive");
  if (lora_dropout < 0.0 || lora_dropout >= 1.0) throw InvalidArgumentError("lm: lora_dropout must be in [0, 1)");
  if (!(lr > 0.0) || weight_decay < 0.0) throw InvalidArgumentError("lm: bad optimizer settings");
  if (batch_size == 0) throw InvalidArgumentError("lm: batch_size must be >= 1");
}

nlohmann::ordered_json LmConfig::to_json() const {
  return {{"d", d},
          {"blocks", blocks},
          {"heads", heads},
          {"ff_mult", ff_mult},
          {"max_len", max_len},
          {"d_gat", d_gat},
          {"lora_r", lora_r},
          {"lora_alpha", lora_alpha},
          {"lora_dropout", lora_dropout},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_train_prompts", max_train_prompts},
          {"time_budget_s", time_budget_s},
          {"inject", inject},
          {"seed", seed}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("lm config must be a JSON object");
  LmConfig c;
  const auto known = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw FormatError("lm config: unknown key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("d", c.d);
  get("blocks", c.blocks);
  get("heads", c.heads);
  get("ff_mult", c.ff_mult);
  get("max_len", c.max_len);
  get("d_gat", c.d_gat);
  get("lora_r", c.lora_r);
  get("lora_alpha", c.lora_alpha);
  get("lora_dropout", c.lora_dropout);
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("max_train_prompts", c.max_train_prompts);
  get("time_budget_s", c.time_budget_s);
  get("inject", c.inject);
  get("seed", c.seed);
  c.validate();
  return c;
}

EncodedPrompt encode_prompt(const rap::RapPrompt& prompt, const Tokenizer& tokenizer, std::size_t max_len) {
  EncodedPrompt out;
  out.id = prompt.id;
  out.label = prompt.label;
  out.answer_id = tokenizer.id(prompt.answer);
  if (out.answer_id != Tokenizer::kYesId && out.answer_id != Tokenizer::kNoId)
    throw FormatError("prompt '" + prompt.id + "': answer must be Yes or No");

  std::vector<std::vector<std::size_t>> parts;
  std::size_t total = 1;
  for (const auto& seg : prompt.segments) {
    parts.push_back(tokenizer.encode(seg.text));
    total += parts.back().size();
  }
  std::vector<bool> keep(parts.size(), true);
  for (auto kind : {rap::SegmentKind::RetrievedLine, rap::SegmentKind::RecentLine}) {
    for (std::size_t i = 0; i < parts.size() && total > max_len; ++i) {
      if (prompt.segments[i].kind != kind) continue;
      keep[i] = false;
      total -= parts[i].size();
      ++out.dropped_lines;
    }
  }
  if (total > max_len)
    throw InvalidArgumentError("prompt '" + prompt.id + "' needs " + std::to_string(total) +
                               " positions without any history lines; max_len is " + std::to_string(max_len));
  out.truncated = out.dropped_lines > 0;
  out.ids.reserve(total);
  out.ids.push_back(Tokenizer::kBosId);
  for (std::size_t i = 0; i < parts.size(); ++i)
    if (keep[i]) out.ids.insert(out.ids.end(), parts[i].begin(), parts[i].end());
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    if (out.ids[i] == Tokenizer::kExpertId) {
      out.placeholder_pos = i;
      break;
    }
  }
  return out;
}

namespace {

std::string bkey(std::size_t b, const std::string& part) { return "block" + std::to_string(b) + "." + part; }

std::uint64_t base_digest(const nn::ParamStore& base) {
  std::uint64_t h = 0;
  for (const auto& [name, e] : base.entries()) {
    const auto v = e.tensor.values();
    h = stable_hash(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)), h) ^
        stable_hash(name);
  }
  return h;
}

}  // namespace

SurrogateLM::SurrogateLM(LmConfig config, Tokenizer tokenizer)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)) {
  config_.validate();
  const std::size_t d = config_.d, f = config_.ff_mult * d, r = config_.lora_r;
  Rng rng(config_.seed);
  base_.add_uniform("tok_emb", {tokenizer_.size(), d}, d, rng);
  base_.add_uniform("pos_emb", {config_.max_len, d}, d, rng);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    base_.add_constant(bkey(b, "ln1.g"), {d}, 1.0);
    base_.add_constant(bkey(b, "ln1.b"), {d}, 0.0);
    for (const char* m : {"q", "k", "v", "o"}) {
      base_.add_uniform(bkey(b, std::string(m) + ".w"), {d, d}, d, rng);
      base_.add_constant(bkey(b, std::string(m) + ".b"), {d}, 0.0);
    }
    base_.add_constant(bkey(b, "ln2.g"), {d}, 1.0);
    base_.add_constant(bkey(b, "ln2.b"), {d}, 0.0);
    base_.add_uniform(bkey(b, "ff1.w"), {d, f}, d, rng);
    base_.add_constant(bkey(b, "ff1.b"), {f}, 0.0);
    base_.add_uniform(bkey(b, "ff2.w"), {f, d}, f, rng);
    base_.add_constant(bkey(b, "ff2.b"), {d}, 0.0);
  }
  base_.add_constant("ln_f.g", {d}, 1.0);
  base_.add_constant("ln_f.b", {d}, 0.0);
  base_.set_trainable(false);

  Rng adapter_rng(config_.seed ^ 0x5bd1e995ULL);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    for (const char* m : {"q", "v"}) {
      adapter_.add_uniform(bkey(b, std::string("lora_") + m + ".A"), {r, d}, d, adapter_rng);
      adapter_.add_constant(bkey(b, std::string("lora_") + m + ".B"), {d, r}, 0.0);
    }
  }
  adapter_.add_uniform("map.w", {config_.d_gat, d}, config_.d_gat, adapter_rng);
  adapter_.add_constant("map.b", {d}, 0.0);
}

Tensor SurrogateLM::embed(const std::vector<std::size_t>& ids) const {
  if (ids.empty()) throw InvalidArgumentError("lm: empty token sequence");
  if (ids.size() > config_.max_len)
    throw InvalidArgumentError("lm: sequence of " + std::to_string(ids.size()) + " exceeds max_len");
  for (auto id : ids)
    if (id >= tokenizer_.size()) throw LookupError("lm: token id " + std::to_string(id) + " outside the vocabulary");
  std::vector<std::size_t> pos(ids.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  return nn::add(nn::gather_rows(base_.get("tok_emb"), ids), nn::gather_rows(base_.get("pos_emb"), pos));
}

Tensor SurrogateLM::map_expert(const Tensor& expert) const {
  if (expert.size() != config_.d_gat)
    throw DimensionError("lm: expert embedding has " + std::to_string(expert.size()) + " values, expected " +
                         std::to_string(config_.d_gat));
  return nn::add_row(nn::matmul(nn::reshape(expert, {1, config_.d_gat}), adapter_.get("map.w")),
                     adapter_.get("map.b"));
}

Tensor SurrogateLM::inject(const Tensor& e, std::optional<std::size_t> pos, const Tensor& expert) const {
  if (!pos) throw InjectionError("lm: prompt has no placeholder to inject into");
  if (*pos >= e.rows()) throw InjectionError("lm: placeholder position outside the sequence");
  return nn::replace_row(e, *pos, map_expert(expert));
}

Tensor SurrogateLM::block(const Tensor& x, std::size_t b, Rng* rng, bool use_lora) const {
  const double scale = config_.lora_alpha / static_cast<double>(config_.lora_r);
  auto lin = [&](const Tensor& in, const std::string& m) {
    return nn::add_row(nn::matmul(in, base_.get(bkey(b, m + ".w"))), base_.get(bkey(b, m + ".b")));
  };
  auto lora = [&](const Tensor& in, const Tensor& out, const std::string& m) {
    if (!use_lora) return out;
    Tensor src = rng ? nn::dropout(in, config_.lora_dropout, *rng) : in;
    Tensor low = nn::matmul(src, adapter_.get(bkey(b, "lora_" + m + ".A")), false, true);
    Tensor delta = nn::matmul(low, adapter_.get(bkey(b, "lora_" + m + ".B")), false, true);
    return nn::add(out, nn::scale(delta, scale));
  };
  Tensor h = nn::layer_norm(x, base_.get(bkey(b, "ln1.g")), base_.get(bkey(b, "ln1.b")));
  Tensor q = lora(h, lin(h, "q"), "q");
  Tensor k = lin(h, "k");
  Tensor v = lora(h, lin(h, "v"), "v");
  Tensor y = nn::add(x, lin(nn::causal_attention(q, k, v, config_.heads), "o"));
  Tensor h2 = nn::layer_norm(y, base_.get(bkey(b, "ln2.g")), base_.get(bkey(b, "ln2.b")));
  Tensor ff = nn::add_row(nn::matmul(nn::gelu(nn::add_row(nn::matmul(h2, base_.get(bkey(b, "ff1.w"))),
                                                          base_.get(bkey(b, "ff1.b")))),
                                     base_.get(bkey(b, "ff2.w"))),
                          base_.get(bkey(b, "ff2.b")));
  return nn::add(y, ff);
}

Tensor SurrogateLM::hidden(const Tensor& e_hid, Rng* rng, bool use_lora) const {
  if (e_hid.rank() != 2 || e_hid.cols() != config_.d) throw DimensionError("lm: input must be [L x d]");
  if (e_hid.rows() > config_.max_len) throw InvalidArgumentError("lm: sequence exceeds max_len");
  Tensor x = e_hid;
  for (std::size_t b = 0; b < config_.blocks; ++b) x = block(x, b, rng, use_lora);
  return nn::layer_norm(x, base_.get("ln_f.g"), base_.get("ln_f.b"));
}

Tensor SurrogateLM::logits(const Tensor& e_hid, Rng* rng, bool use_lora) const {
  return nn::matmul(hidden(e_hid, rng, use_lora), base_.get("tok_emb"), false, true);
}

Tensor SurrogateLM::last_logits(const Tensor& e_hid, Rng* rng, bool use_lora) const {
  Tensor h = hidden(e_hid, rng, use_lora);
  return nn::matmul(nn::slice_rows(h, h.rows() - 1, h.rows()), base_.get("tok_emb"), false, true);
}

Tensor SurrogateLM::prepare(const EncodedPrompt& p, std::span<const double> expert) const {
  Tensor e = embed(p.ids);
  if (!config_.inject || !p.placeholder_pos) return e;
  return inject(e, p.placeholder_pos, Tensor::from({expert.size()}, {expert.begin(), expert.end()}));
}

void SurrogateLM::save(const std::string& path) const {
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "lm";
  ckpt.meta["config"] = config_.to_json();
  ckpt.meta["tokenizer"] = tokenizer_.to_json();
  // The base is never trained; it is rebuilt from the seed and checked
  // against this digest on load.
  ckpt.meta["base_digest"] = std::to_string(base_digest(base_));
  nn::append_params(ckpt, adapter_, "adapter.");
  nn::write_checkpoint(path, ckpt);
}

SurrogateLM SurrogateLM::load(const std::string& path) {
  const auto ckpt = nn::read_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "lm") throw FormatError(path + ": not an LM checkpoint");
  SurrogateLM lm(LmConfig::from_json(ckpt.meta.at("config")), Tokenizer::from_json(ckpt.meta.at("tokenizer")));
  if (ckpt.meta.at("base_digest").get<std::string>() != std::to_string(base_digest(lm.base_)))
    throw FormatError(path + ": rebuilt base weights do not match the checkpoint digest");
  nn::load_params(ckpt, lm.adapter_, "adapter.");
  return lm;
}

double score_yes_no(const Tensor& last_logits) {
  const std::size_t v = last_logits.cols();
  if (v <= Tokenizer::kNoId) throw DimensionError("score_yes_no: logits row too short");
  const std::size_t row = (last_logits.rows() - 1) * v;
  return nn::sigmoid(last_logits.values()[row + Tokenizer::kYesId] - last_logits.values()[row + Tokenizer::kNoId]);
}

}  // namespace elcorec::lm
