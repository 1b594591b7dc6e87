#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dataset/dataset.hpp"

namespace elcorec::data {

/// Planted-signal generator.
///
/// Every item has one genre and a latent quality q ~ N(0,1); every user a
/// genre preference vector ~ N(0, I). For an interaction with item i at time
/// t the click probability is
///
///   sigmoid(bias + a * pref[genre(i)] + b * S + c * q_i)
///
/// where S is the mean of (rating - 3) over the same-genre items among the
/// user's `window` most recent interactions, each weighted by
/// exp(-(t - t_k) / decay_days). The label is drawn from that probability and
/// the observed rating is drawn from {4,5} for clicks and {1,2,3} otherwise,
/// so the signal lives in ratings and timestamps, not in titles.
struct SynthConfig {
  std::size_t n_users = 1500;
  std::size_t n_items = 300;
  std::size_t n_genres = 6;
  double horizon_days = 180.0;
  std::size_t interactions_per_user = 40;  // each user draws uniformly from [n/2, 3n/2]
  double a = 0.0;
  double b = 2.5;
  double c = 1.0;
  double bias = 0.0;
  double decay_days = 3.0;  // <= 0 disables recency weighting
  std::size_t window = 15;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthLatents {
  std::vector<std::vector<double>> user_pref;  // [user][genre]
  std::vector<double> item_quality;
  std::vector<std::size_t> item_genre;
  std::vector<double> planted_prob;  // per interaction record (by row)
};

struct SynthDataset {
  SynthConfig config;
  Dataset data;
  SynthLatents latents;
};

SynthDataset synth_generate(const SynthConfig& config);

/// Writes interactions.tsv, items.tsv, users.tsv, schema.json and
/// latents.json into `dir` (created if missing).
void write_synth(const SynthDataset& ds, const std::string& dir);

/// Planted probabilities from a latents.json written by write_synth.
std::vector<double> read_planted_prob(const std::string& latents_path);

}  // namespace elcorec::data
