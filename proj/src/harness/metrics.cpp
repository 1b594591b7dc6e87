#include "harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace elcorec::harness {
namespace {

void check_sizes(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size())
    throw DimensionError("labels (" + std::to_string(labels.size()) + ") and scores (" + std::to_string(scores.size()) +
                         ") differ in length");
}

}  // namespace

double auc(std::span<const int> labels, std::span<const double> scores) {
  check_sizes(labels, scores);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks with average ranks for tied groups; ranks are kept
  // doubled so every quantity stays an exact integer.
  std::uint64_t pos = 0, neg = 0, rank2_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t avg2 = i + 1 + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        ++pos;
        rank2_sum += avg2;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw DomainError("AUC is undefined unless both classes are present");
  const std::uint64_t u2 = rank2_sum - pos * (pos + 1);  // 2 * Mann-Whitney U
  return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double logloss(std::span<const int> labels, std::span<const double> scores) {
  check_sizes(labels, scores);
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(scores[i], 1e-7, 1.0 - 1e-7);
    total -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size());
}

double accuracy(std::span<const int> labels, std::span<const double> scores, double threshold) {
  check_sizes(labels, scores);
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += (scores[i] >= threshold) == (labels[i] == 1);
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace elcorec::harness
