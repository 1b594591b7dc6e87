#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "gat/graph.hpp"
#include "numerics/param_store.hpp"

namespace elcorec::gat {

struct GatConfig {
  std::size_t d = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double leaky_slope = 0.2;
  std::size_t k = 15;
  double time_scale = 86400.0;  // seconds per time_encode unit
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  double time_budget_s = 0.0;       // 0 = unlimited
  std::size_t max_train_samples = 0;  // 0 = all
  bool drop_rating = false;
  bool drop_timestamp = false;
  std::uint64_t seed = 0;

  /// Throws InvalidArgumentError on d % heads != 0, odd d, zero layers, etc.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static GatConfig from_json(const nlohmann::json& j);
};

/// Attention weights of one layer, one [E_t x heads] tensor per edge type in
/// batch edge order.
struct LayerTrace {
  std::array<nn::Tensor, kEdgeTypes> alpha;
};

struct GatForward {
  nn::Tensor h;         // final node embeddings [N x d]
  nn::Tensor e_user;    // [B x d]
  nn::Tensor e_target;  // [B x d]
  nn::Tensor prob;      // [B]
};

class GatModel {
 public:
  GatModel(GatConfig config, Vocab vocab);

  const GatConfig& config() const { return config_; }
  GatConfig& config() { return config_; }
  const Vocab& vocab() const { return vocab_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  HeteroGraph graph(const data::Sample& sample) const;

  nn::Tensor init_user_nodes(const BatchGraph& b) const;
  nn::Tensor init_item_nodes(const BatchGraph& b) const;
  nn::Tensor init_feature_nodes(const BatchGraph& b) const;
  /// All initial embeddings in batch order: users, items, features.
  nn::Tensor init_nodes(const BatchGraph& b) const;

  nn::Tensor layer(const nn::Tensor& h, const BatchGraph& b, std::size_t l, LayerTrace* trace = nullptr) const;
  GatForward forward(const BatchGraph& b, std::vector<LayerTrace>* traces = nullptr) const;
  nn::Tensor loss(const BatchGraph& b, std::span<const double> labels) const;

  void save(const std::string& path) const;
  static GatModel load(const std::string& path);

 private:
  GatConfig config_;
  Vocab vocab_;
  nn::ParamStore params_;
};

/// sigmoid(cos(e_u, e_t)) per row. Zero-norm rows raise NumericError.
nn::Tensor predict_ctr(const nn::Tensor& e_user, const nn::Tensor& e_target);
double predict_ctr(std::span<const double> e_user, std::span<const double> e_target);

}  // namespace elcorec::gat
