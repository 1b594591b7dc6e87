#pragma once

#include <span>

namespace elcorec::harness {

/// Rank-statistic AUC: P(score of a random positive > score of a random
/// negative), ties worth one half. Throws DomainError unless both classes occur.
double auc(std::span<const int> labels, std::span<const double> scores);

/// Mean binary cross-entropy with scores clipped to [1e-7, 1 - 1e-7].
double logloss(std::span<const int> labels, std::span<const double> scores);

/// Fraction of samples where (score >= threshold) equals the label.
double accuracy(std::span<const int> labels, std::span<const double> scores, double threshold = 0.5);

}  // namespace elcorec::harness
