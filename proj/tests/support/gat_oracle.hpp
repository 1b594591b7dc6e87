#pragma once

// Reference pieces shared by the GAT unit tests and the acceptance runner:
// random samples/graphs and a straight-line dense implementation of one
// attention layer that uses nothing but loops over plain matrices.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "dataset/types.hpp"
#include "gat/model.hpp"

namespace elcorec::testing {

using Matrix = std::vector<std::vector<double>>;

inline data::ItemPtr make_item(const std::string& id, std::vector<std::string> genres) {
  data::ItemProfile p{id, "Title " + id, {}};
  if (!genres.empty()) p.features.push_back({"genre", std::move(genres)});
  return std::make_shared<const data::ItemProfile>(std::move(p));
}

inline data::UserPtr make_user(const std::string& id, const std::string& age = "", const std::string& occ = "") {
  data::UserProfile p{id, {}};
  if (!age.empty()) p.features.push_back({"age", {age}});
  if (!occ.empty()) p.features.push_back({"occupation", {occ}});
  return std::make_shared<const data::UserProfile>(std::move(p));
}

inline data::Sample make_sample(const std::string& id, data::UserPtr user, data::ItemPtr target, std::int64_t ts,
                                std::vector<data::HistoryEntry> history, int label = 1) {
  data::Sample s;
  s.id = id;
  s.user = std::move(user);
  s.target = std::move(target);
  s.target_ts = ts;
  s.label = label;
  s.rating = label ? 5 : 1;
  s.history = data::HistoryView(std::move(history));
  return s;
}

/// Random sample over a small item/genre pool: 1..max_hist history entries
/// with random ratings and strictly earlier timestamps, 0..2 genres per item.
inline data::Sample random_sample(Rng& rng, std::size_t index, std::size_t max_hist, std::size_t n_items = 12,
                                  std::size_t n_genres = 4) {
  auto item = [&](std::int64_t i) {
    std::vector<std::string> genres;
    const auto g = rng.integer(0, 2);
    for (std::int64_t j = 0; j < g; ++j) genres.push_back("g" + std::to_string(rng.integer(0, n_genres - 1)));
    if (genres.size() == 2 && genres[0] == genres[1]) genres.pop_back();
    return make_item("i" + std::to_string(i), genres);
  };
  const std::int64_t target_ts = 1'000'000 + rng.integer(0, 1'000'000);
  const auto n_hist = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(max_hist)));
  std::vector<data::HistoryEntry> hist;
  std::int64_t ts = target_ts - rng.integer(1, 86400 * 30);
  for (std::size_t i = 0; i < n_hist; ++i) {
    hist.insert(hist.begin(), {item(rng.integer(0, n_items - 1)), static_cast<int>(rng.integer(1, 5)), ts});
    ts -= rng.integer(1, 86400 * 10);
  }
  auto user = make_user("u" + std::to_string(rng.integer(0, 5)), "a" + std::to_string(rng.integer(0, 2)),
                        rng.bernoulli(0.5) ? "o" + std::to_string(rng.integer(0, 2)) : "");
  return make_sample("s" + std::to_string(index), user, item(rng.integer(0, n_items - 1)), target_ts, std::move(hist),
                     static_cast<int>(rng.integer(0, 1)));
}

inline Matrix param_matrix(const gat::GatModel& m, const std::string& name) {
  const auto& t = m.params().get(name);
  const std::size_t rows = t.rank() == 1 ? 1 : t.dim(0), cols = t.rank() == 1 ? t.dim(0) : t.dim(1);
  Matrix out(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r][c] = t.values()[r * cols + c];
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

/// One attention layer on a single graph in local node order.
inline Matrix dense_layer(const gat::GatModel& m, const gat::HeteroGraph& g, const Matrix& h, std::size_t l) {
  const auto& cfg = m.config();
  const std::size_t n = h.size(), d = cfg.d, heads = cfg.heads, dh = d / heads;
  const std::string pre = "layer" + std::to_string(l) + ".";
  Matrix out = matmul(h, param_matrix(m, pre + "self.w"));
  const auto bias = param_matrix(m, pre + "self.b")[0];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) out[i][c] += bias[c];

  for (std::size_t t = 0; t < gat::kEdgeTypes; ++t) {
    const std::string type = std::string(gat::edge_type_name(t)) + ".";
    const Matrix wh = matmul(h, param_matrix(m, pre + type + "w"));
    const Matrix a_src = param_matrix(m, pre + type + "a_src");
    const Matrix a_dst = param_matrix(m, pre + type + "a_dst");
    const Matrix proj = param_matrix(m, pre + type + "proj");
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> nbrs;
      for (const auto& e : g.edges[t])
        if (e.dst == i) nbrs.push_back(e.src);
      if (nbrs.empty()) continue;
      std::vector<double> act(d, 0.0);
      for (std::size_t k = 0; k < heads; ++k) {
        std::vector<double> score(nbrs.size());
        double mx = -INFINITY;
        for (std::size_t q = 0; q < nbrs.size(); ++q) {
          double e = 0.0;
          for (std::size_t c = 0; c < dh; ++c) e += a_dst[k][c] * wh[i][k * dh + c] + a_src[k][c] * wh[nbrs[q]][k * dh + c];
          score[q] = e > 0 ? e : cfg.leaky_slope * e;
          mx = std::max(mx, score[q]);
        }
        double z = 0.0;
        for (auto& s : score) z += (s = std::exp(s - mx));
        for (std::size_t c = 0; c < dh; ++c) {
          double acc = 0.0;
          for (std::size_t q = 0; q < nbrs.size(); ++q) acc += score[q] / z * wh[nbrs[q]][k * dh + c];
          act[k * dh + c] = acc > 0 ? acc : std::expm1(acc);
        }
      }
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t r = 0; r < d; ++r) out[i][c] += act[r] * proj[r][c];
    }
  }
  return out;
}

}  // namespace elcorec::testing
