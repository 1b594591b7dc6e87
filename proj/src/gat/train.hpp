#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gat/model.hpp"

namespace elcorec::gat {

struct GatTrainReport {
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 if no epoch finished
  double best_valid_auc = 0.0;
  std::size_t steps = 0;
  std::size_t train_samples = 0;
  double seconds = 0.0;
  double seconds_per_step = 0.0;
  bool stopped_early = false;
  bool hit_time_budget = false;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> valid_auc;   // per epoch

  nlohmann::ordered_json to_json() const;
};

using GatLogger = std::function<void(const std::string&)>;

/// Builds the vocabulary from `train` and fits a fresh model.
GatModel make_gat(const GatConfig& config, const std::vector<data::Sample>& train);

/// Mini-batch AdamW on mean BCE. Early stopping on validation AUC with the
/// configured patience; the best-validation parameters are restored before
/// returning. A non-finite loss raises NumericError.
GatTrainReport train_gat(GatModel& model, const std::vector<data::Sample>& train,
                         const std::vector<data::Sample>& valid, const GatLogger& log = {});

/// Click probabilities in sample order.
std::vector<double> gat_predict(const GatModel& model, const std::vector<data::Sample>& samples);

/// Final-layer target-item embedding per sample, row-major [n x d].
std::vector<double> gat_embed(const GatModel& model, const std::vector<data::Sample>& samples);
std::vector<double> expert_embedding(const GatModel& model, const data::Sample& sample);

}  // namespace elcorec::gat
