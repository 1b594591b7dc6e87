#include "gat/model.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "numerics/checkpoint.hpp"
#include "numerics/ops.hpp"

namespace elcorec::gat {

using nn::Tensor;

void GatConfig::validate() const {
  if (d == 0 || d % 2 != 0) throw InvalidArgumentError("gat: d must be a positive even number");
  if (heads == 0 || d % heads != 0) throw InvalidArgumentError("gat: d must be divisible by heads");
  if (layers == 0) throw InvalidArgumentError("gat: layers must be >= 1");
  if (k == 0) throw InvalidArgumentError("gat: K must be >= 1");
  if (!(time_scale > 0.0)) throw InvalidArgumentError("gat: time_scale must be positive");
  if (!(lr > 0.0) || weight_decay < 0.0) throw InvalidArgumentError("gat: bad optimizer settings");
  if (batch_size == 0) throw InvalidArgumentError("gat: batch_size must be >= 1");
  if (!(leaky_slope >= 0.0)) throw InvalidArgumentError("gat: leaky_slope must be non-negative");
}

nlohmann::ordered_json GatConfig::to_json() const {
  return {{"d", d},
          {"layers", layers},
          {"heads", heads},
          {"leaky_slope", leaky_slope},
          {"k", k},
          {"time_scale", time_scale},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"patience", patience},
          {"max_epochs", max_epochs},
          {"time_budget_s", time_budget_s},
          {"max_train_samples", max_train_samples},
          {"drop_rating", drop_rating},
          {"drop_timestamp", drop_timestamp},
          {"seed", seed}};
}

GatConfig GatConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("gat config must be a JSON object");
  GatConfig c;
  const auto known = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw FormatError("gat config: unknown key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("d", c.d);
  get("layers", c.layers);
  get("heads", c.heads);
  get("leaky_slope", c.leaky_slope);
  get("k", c.k);
  get("time_scale", c.time_scale);
  get("lr", c.lr);
  get("weight_decay", c.weight_decay);
  get("batch_size", c.batch_size);
  get("patience", c.patience);
  get("max_epochs", c.max_epochs);
  get("time_budget_s", c.time_budget_s);
  get("max_train_samples", c.max_train_samples);
  get("drop_rating", c.drop_rating);
  get("drop_timestamp", c.drop_timestamp);
  get("seed", c.seed);
  c.validate();
  return c;
}

namespace {

std::string layer_key(std::size_t l, const std::string& part) { return "layer" + std::to_string(l) + "." + part; }

}  // namespace

GatModel::GatModel(GatConfig config, Vocab vocab) : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  const std::size_t d = config_.d, dh = d / config_.heads, m = vocab_.user_fields().size();
  Rng rng(config_.seed);
  params_.add_uniform("emb.user", {vocab_.user_rows(), d}, d, rng);
  params_.add_uniform("emb.user_feature", {vocab_.user_feature_rows(), d}, d, rng);
  params_.add_uniform("emb.item", {vocab_.item_rows(), d}, d, rng);
  params_.add_uniform("emb.rating", {6, d}, d, rng);
  params_.add_uniform("emb.feature", {vocab_.feature_rows(), d}, d, rng);
  params_.add_uniform("in.user.w", {(1 + m) * d, d}, (1 + m) * d, rng);
  params_.add_constant("in.user.b", {d}, 0.0);
  params_.add_uniform("in.item.w", {3 * d, d}, 3 * d, rng);
  params_.add_constant("in.item.b", {d}, 0.0);
  params_.add_uniform("in.feature.w", {d, d}, d, rng);
  params_.add_constant("in.feature.b", {d}, 0.0);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    for (std::size_t t = 0; t < kEdgeTypes; ++t) {
      const std::string type = edge_type_name(t);
      params_.add_uniform(layer_key(l, type + ".w"), {d, d}, d, rng);
      params_.add_uniform(layer_key(l, type + ".a_src"), {config_.heads, dh}, dh, rng);
      params_.add_uniform(layer_key(l, type + ".a_dst"), {config_.heads, dh}, dh, rng);
      params_.add_uniform(layer_key(l, type + ".proj"), {d, d}, d, rng);
    }
    params_.add_uniform(layer_key(l, "self.w"), {d, d}, d, rng);
    params_.add_constant(layer_key(l, "self.b"), {d}, 0.0);
  }
}

HeteroGraph GatModel::graph(const data::Sample& sample) const {
  return build_graph(sample, vocab_, config_.k, config_.time_scale);
}

Tensor GatModel::init_user_nodes(const BatchGraph& b) const {
  std::vector<Tensor> parts = {nn::gather_rows(params_.get("emb.user"), b.user_rows)};
  const auto& table = params_.get("emb.user_feature");
  for (const auto& f : b.user_fields) {
    Tensor summed = nn::segment_sum(nn::gather_rows(table, f.rows), f.owner, b.num_users);
    parts.push_back(nn::head_scale(summed, Tensor::from({b.num_users, 1}, f.inv_count)));
  }
  return nn::add_row(nn::matmul(nn::concat_cols(parts), params_.get("in.user.w")), params_.get("in.user.b"));
}

Tensor GatModel::init_item_nodes(const BatchGraph& b) const {
  const std::size_t d = config_.d, n = b.num_items;
  Tensor id = nn::gather_rows(params_.get("emb.item"), b.item_rows);
  std::vector<double> te(n * d, 0.0);
  if (!config_.drop_timestamp) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = time_encode(b.delta_t[i], d);
      std::copy(row.begin(), row.end(), te.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
  }
  Tensor rating = config_.drop_rating ? Tensor::zeros({n, d}) : nn::gather_rows(params_.get("emb.rating"), b.ratings);
  Tensor x = nn::concat_cols({id, Tensor::from({n, d}, std::move(te)), rating});
  return nn::add_row(nn::matmul(x, params_.get("in.item.w")), params_.get("in.item.b"));
}

Tensor GatModel::init_feature_nodes(const BatchGraph& b) const {
  Tensor x = nn::gather_rows(params_.get("emb.feature"), b.feature_rows);
  return nn::add_row(nn::matmul(x, params_.get("in.feature.w")), params_.get("in.feature.b"));
}

Tensor GatModel::init_nodes(const BatchGraph& b) const {
  std::vector<Tensor> parts = {init_user_nodes(b), init_item_nodes(b)};
  if (b.num_features > 0) parts.push_back(init_feature_nodes(b));
  return nn::concat_rows(parts);
}

Tensor GatModel::layer(const Tensor& h, const BatchGraph& b, std::size_t l, LayerTrace* trace) const {
  if (l >= config_.layers) throw InvalidArgumentError("gat: layer index out of range");
  const std::size_t n = b.num_nodes();
  if (h.rows() != n || h.cols() != config_.d) throw DimensionError("gat: node embedding shape mismatch");
  std::vector<Tensor> terms = {nn::add_row(nn::matmul(h, params_.get(layer_key(l, "self.w"))),
                                           params_.get(layer_key(l, "self.b")))};
  for (std::size_t t = 0; t < kEdgeTypes; ++t) {
    if (b.src[t].empty()) continue;
    const std::string type = edge_type_name(t);
    Tensor wh = nn::matmul(h, params_.get(layer_key(l, type + ".w")));
    Tensor s_src = nn::head_dot(wh, params_.get(layer_key(l, type + ".a_src")));
    Tensor s_dst = nn::head_dot(wh, params_.get(layer_key(l, type + ".a_dst")));
    Tensor e = nn::add(nn::gather_rows(s_src, b.src[t]), nn::gather_rows(s_dst, b.dst[t]));
    Tensor alpha = nn::segment_softmax(nn::leaky_relu(e, config_.leaky_slope), b.dst[t], n);
    if (trace) trace->alpha[t] = alpha;
    Tensor agg = nn::segment_sum(nn::head_scale(nn::gather_rows(wh, b.src[t]), alpha), b.dst[t], n);
    terms.push_back(nn::matmul(nn::elu(agg), params_.get(layer_key(l, type + ".proj"))));
  }
  return nn::add_n(terms);
}

GatForward GatModel::forward(const BatchGraph& b, std::vector<LayerTrace>* traces) const {
  if (b.num_users == 0) throw InvalidArgumentError("gat: empty batch");
  GatForward out;
  out.h = init_nodes(b);
  if (traces) traces->assign(config_.layers, {});
  for (std::size_t l = 0; l < config_.layers; ++l) out.h = layer(out.h, b, l, traces ? &(*traces)[l] : nullptr);
  out.e_user = nn::gather_rows(out.h, b.user_nodes);
  out.e_target = nn::gather_rows(out.h, b.target_nodes);
  out.prob = predict_ctr(out.e_user, out.e_target);
  return out;
}

Tensor GatModel::loss(const BatchGraph& b, std::span<const double> labels) const {
  return nn::binary_cross_entropy(forward(b).prob, labels);
}

void GatModel::save(const std::string& path) const {
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "gat";
  ckpt.meta["config"] = config_.to_json();
  ckpt.meta["vocab"] = vocab_.to_json();
  nn::append_params(ckpt, params_);
  nn::write_checkpoint(path, ckpt);
}

GatModel GatModel::load(const std::string& path) {
  const auto ckpt = nn::read_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "gat") throw FormatError(path + ": not a GAT checkpoint");
  GatModel model(GatConfig::from_json(ckpt.meta.at("config")), Vocab::from_json(ckpt.meta.at("vocab")));
  nn::load_params(ckpt, model.params_);
  return model;
}

Tensor predict_ctr(const Tensor& e_user, const Tensor& e_target) {
  return nn::sigmoid(nn::row_cosine(e_user, e_target));
}

double predict_ctr(std::span<const double> e_user, std::span<const double> e_target) {
  if (e_user.size() != e_target.size()) throw DimensionError("predict_ctr: vectors differ in length");
  double dot = 0.0, nu = 0.0, nt = 0.0;
  for (std::size_t i = 0; i < e_user.size(); ++i) {
    dot += e_user[i] * e_target[i];
    nu += e_user[i] * e_user[i];
    nt += e_target[i] * e_target[i];
  }
  if (nu == 0.0 || nt == 0.0) throw NumericError("predict_ctr: zero-norm embedding");
  const double cos = std::clamp(dot / std::sqrt(nu * nt), -1.0, 1.0);
  return nn::sigmoid(cos);
}

}  // namespace elcorec::gat
