#include "gat/train.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "harness/metrics.hpp"
#include "numerics/tensor.hpp"

namespace elcorec::gat {
namespace {

constexpr std::size_t kEvalBatch = 256;

std::vector<HeteroGraph> build_all(const GatModel& model, const std::vector<data::Sample>& samples) {
  std::vector<HeteroGraph> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.graph(s));
  return out;
}

BatchGraph batch_of(const std::vector<HeteroGraph>& graphs, const std::vector<std::size_t>& order, std::size_t begin,
                    std::size_t end) {
  std::vector<const HeteroGraph*> ptrs;
  for (std::size_t i = begin; i < end; ++i) ptrs.push_back(&graphs[order[i]]);
  return batch_graphs(ptrs);
}

// Forward over fixed-size chunks without recording history; `take` receives
// each chunk's forward result and its first sample index.
template <typename F>
void for_each_chunk(const GatModel& model, const std::vector<HeteroGraph>& graphs, F&& take) {
  nn::NoGradGuard guard;
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t b = 0; b < graphs.size(); b += kEvalBatch) {
    const std::size_t e = std::min(graphs.size(), b + kEvalBatch);
    take(model.forward(batch_of(graphs, order, b, e)), b);
  }
}

std::vector<double> predict_graphs(const GatModel& model, const std::vector<HeteroGraph>& graphs) {
  std::vector<double> out(graphs.size());
  for_each_chunk(model, graphs, [&](const GatForward& f, std::size_t b) {
    std::copy(f.prob.values().begin(), f.prob.values().end(), out.begin() + static_cast<std::ptrdiff_t>(b));
  });
  return out;
}

}  // namespace

nlohmann::ordered_json GatTrainReport::to_json() const {
  return {{"epochs", epochs},
          {"best_epoch", best_epoch},
          {"best_valid_auc", best_valid_auc},
          {"steps", steps},
          {"train_samples", train_samples},
          {"stopped_early", stopped_early},
          {"hit_time_budget", hit_time_budget},
          {"train_loss", train_loss},
          {"valid_auc", valid_auc}};
}

GatModel make_gat(const GatConfig& config, const std::vector<data::Sample>& train) {
  return GatModel(config, Vocab::build(train));
}

GatTrainReport train_gat(GatModel& model, const std::vector<data::Sample>& train,
                         const std::vector<data::Sample>& valid, const GatLogger& log) {
  if (train.empty() || valid.empty()) throw InvalidArgumentError("train_gat needs non-empty train and valid splits");
  const auto& cfg = model.config();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> pick(train.size());
  std::iota(pick.begin(), pick.end(), 0);
  if (cfg.max_train_samples > 0 && cfg.max_train_samples < train.size()) {
    rng.shuffle(pick);
    pick.resize(cfg.max_train_samples);
    std::sort(pick.begin(), pick.end());
  }
  std::vector<HeteroGraph> graphs;
  std::vector<double> labels;
  for (auto i : pick) {
    graphs.push_back(model.graph(train[i]));
    labels.push_back(static_cast<double>(train[i].label));
  }
  const auto valid_graphs = build_all(model, valid);
  std::vector<int> valid_labels;
  for (const auto& s : valid) valid_labels.push_back(s.label);

  GatTrainReport report;
  report.train_samples = graphs.size();
  nn::AdamW opt{cfg.lr, cfg.weight_decay};
  auto& params = model.params();
  auto best = params.snapshot();
  double best_auc = -1.0;
  std::size_t since_best = 0;
  double step_seconds = 0.0;

  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      std::vector<double> y;
      for (std::size_t i = b; i < e; ++i) y.push_back(labels[order[i]]);
      params.zero_grad();
      nn::Tensor loss = model.loss(batch_of(graphs, order, b, e), y);
      const double v = loss.item();
      if (!std::isfinite(v))
        throw NumericError("train_gat: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(report.steps + 1) + " (lr " + std::to_string(cfg.lr) + ")");
      loss.backward();
      opt.step(params);
      loss_sum += v * static_cast<double>(e - b);
      seen += e - b;
      ++report.steps;
      step_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (cfg.time_budget_s > 0.0 && elapsed() > cfg.time_budget_s) {
        report.hit_time_budget = true;
        break;
      }
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(seen));
    const double auc = harness::auc(valid_labels, predict_graphs(model, valid_graphs));
    report.valid_auc.push_back(auc);
    report.epochs = epoch;
    if (log)
      log("epoch " + std::to_string(epoch) + " loss " + std::to_string(report.train_loss.back()) + " valid_auc " +
          std::to_string(auc) + " t=" + std::to_string(elapsed()) + "s");
    if (auc > best_auc) {
      best_auc = auc;
      best = params.snapshot();
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      report.stopped_early = true;
      break;
    }
    if (report.hit_time_budget || (cfg.time_budget_s > 0.0 && elapsed() > cfg.time_budget_s)) {
      report.hit_time_budget = true;
      break;
    }
  }
  params.restore(best);
  report.best_valid_auc = best_auc;
  report.seconds = elapsed();
  report.seconds_per_step = report.steps ? step_seconds / static_cast<double>(report.steps) : 0.0;
  return report;
}

std::vector<double> gat_predict(const GatModel& model, const std::vector<data::Sample>& samples) {
  return predict_graphs(model, build_all(model, samples));
}

std::vector<double> gat_embed(const GatModel& model, const std::vector<data::Sample>& samples) {
  const auto graphs = build_all(model, samples);
  const std::size_t d = model.config().d;
  std::vector<double> out(graphs.size() * d);
  for_each_chunk(model, graphs, [&](const GatForward& f, std::size_t b) {
    std::copy(f.e_target.values().begin(), f.e_target.values().end(),
              out.begin() + static_cast<std::ptrdiff_t>(b * d));
  });
  return out;
}

std::vector<double> expert_embedding(const GatModel& model, const data::Sample& sample) {
  return gat_embed(model, {sample});
}

}  // namespace elcorec::gat
