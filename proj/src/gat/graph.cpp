#include "gat/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "common/error.hpp"

namespace elcorec::gat {
namespace {

std::string feature_key(const std::string& field, const std::string& value) { return field + '\x1f' + value; }

}  // namespace

std::vector<double> time_encode(double delta_t, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw DomainError("time encoding needs an even dimension, got " + std::to_string(d));
  if (!(delta_t >= 0.0)) throw DomainError("time gap must be non-negative");
  std::vector<double> out(d);
  for (std::size_t p = 0; p < d; ++p) {
    const double arg = delta_t / std::pow(10000.0, static_cast<double>(p) / static_cast<double>(d));
    out[p] = p % 2 == 0 ? std::sin(arg) : std::cos(arg);
  }
  return out;
}

std::size_t Vocab::feature(const std::string& field, const std::string& value) const {
  return lookup(features_, feature_key(field, value));
}

std::size_t Vocab::user_feature(const std::string& field, const std::string& value) const {
  return lookup(user_features_, feature_key(field, value));
}

void Vocab::add(Map& m, std::vector<std::string>& order, const std::string& key) {
  if (m.emplace(key, order.size() + 1).second) order.push_back(key);
}

Vocab Vocab::build(const std::vector<data::Sample>& samples) {
  Vocab v;
  auto add_item = [&](const data::ItemProfile& item) {
    add(v.items_, v.item_order_, item.id);
    for (const auto& f : item.features)
      for (const auto& val : f.values) add(v.features_, v.feature_order_, feature_key(f.field, val));
  };
  for (const auto& s : samples) {
    add(v.users_, v.user_order_, s.user->id);
    for (const auto& f : s.user->features) {
      if (std::find(v.user_fields_.begin(), v.user_fields_.end(), f.field) == v.user_fields_.end()) v.user_fields_.push_back(f.field);
      for (const auto& val : f.values) add(v.user_features_, v.user_feature_order_, feature_key(f.field, val));
    }
    add_item(*s.target);
    for (const auto& h : s.history) add_item(*h.item);
  }
  return v;
}

nlohmann::ordered_json Vocab::to_json() const {
  nlohmann::ordered_json j;
  j["users"] = user_order_;
  j["items"] = item_order_;
  j["features"] = feature_order_;
  j["user_features"] = user_feature_order_;
  j["user_fields"] = user_fields_;
  return j;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  for (const auto& k : j.at("users")) add(v.users_, v.user_order_, k.get<std::string>());
  for (const auto& k : j.at("items")) add(v.items_, v.item_order_, k.get<std::string>());
  for (const auto& k : j.at("features")) add(v.features_, v.feature_order_, k.get<std::string>());
  for (const auto& k : j.at("user_features")) add(v.user_features_, v.user_feature_order_, k.get<std::string>());
  v.user_fields_ = j.at("user_fields").get<std::vector<std::string>>();
  return v;
}

const char* edge_type_name(std::size_t t) {
  static const char* names[] = {"interacted", "click_by", "belong_to", "has_instance"};
  return t < kEdgeTypes ? names[t] : "?";
}

std::size_t HeteroGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

HeteroGraph build_graph(const data::Sample& sample, const Vocab& vocab, std::size_t k, double time_scale) {
  if (sample.history.empty()) throw ConstructionError("sample '" + sample.id + "' has an empty history");
  if (k == 0) throw InvalidArgumentError("graph history length K must be >= 1");
  if (!(time_scale > 0.0)) throw InvalidArgumentError("time scale must be positive");
  HeteroGraph g;
  auto count_oov = [&](std::size_t row) {
    if (row == 0) ++g.oov;
    return row;
  };

  g.user_row = count_oov(vocab.user(sample.user->id));
  g.user_feature_rows.resize(vocab.user_fields().size());
  for (std::size_t f = 0; f < vocab.user_fields().size(); ++f) {
    for (const auto& feat : sample.user->features) {
      if (feat.field != vocab.user_fields()[f]) continue;
      for (const auto& val : feat.values) g.user_feature_rows[f].push_back(count_oov(vocab.user_feature(feat.field, val)));
    }
  }

  std::vector<const data::ItemProfile*> items = {sample.target.get()};
  g.ratings.push_back(0);
  g.delta_t.push_back(0.0);
  const std::size_t n = sample.history.size();
  for (std::size_t i = n - std::min(n, k); i < n; ++i) {
    const auto& h = sample.history[i];
    if (h.timestamp > sample.target_ts) throw ConstructionError("sample '" + sample.id + "' has a history entry after its target");
    items.push_back(h.item.get());
    g.ratings.push_back(static_cast<std::size_t>(h.rating));
    g.delta_t.push_back(static_cast<double>(sample.target_ts - h.timestamp) / time_scale);
  }

  std::map<std::string, std::size_t> feature_index;
  for (std::size_t i = 0; i < items.size(); ++i) {
    g.item_rows.push_back(count_oov(vocab.item(items[i]->id)));
    g.edges[Interacted].push_back({HeteroGraph::user_node(), 1 + i});
    g.edges[ClickBy].push_back({1 + i, HeteroGraph::user_node()});
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (const auto& f : items[i]->features) {
      for (const auto& val : f.values) {
        auto [it, fresh] = feature_index.try_emplace(feature_key(f.field, val), g.feature_rows.size());
        if (fresh) g.feature_rows.push_back(count_oov(vocab.feature(f.field, val)));
        const std::size_t node = 1 + items.size() + it->second;
        g.edges[BelongTo].push_back({1 + i, node});
        g.edges[HasInstance].push_back({node, 1 + i});
      }
    }
  }
  return g;
}

BatchGraph batch_graphs(const std::vector<const HeteroGraph*>& graphs) {
  BatchGraph b;
  if (graphs.empty()) return b;
  const std::size_t fields = graphs.front()->user_feature_rows.size();
  b.user_fields.resize(fields);
  b.num_users = graphs.size();
  for (const auto* g : graphs) {
    b.num_items += g->num_items();
    b.num_features += g->num_features();
  }
  std::size_t item_base = b.num_users, feature_base = b.num_users + b.num_items;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = *graphs[gi];
    if (g.user_feature_rows.size() != fields) throw DimensionError("graphs disagree on the number of user fields");
    b.user_rows.push_back(g.user_row);
    for (std::size_t f = 0; f < fields; ++f) {
      auto& fv = b.user_fields[f];
      const auto& rows = g.user_feature_rows[f];
      if (rows.empty()) {
        fv.rows.push_back(0);
        fv.owner.push_back(gi);
        fv.inv_count.push_back(1.0);
      } else {
        for (auto r : rows) {
          fv.rows.push_back(r);
          fv.owner.push_back(gi);
        }
        fv.inv_count.push_back(1.0 / static_cast<double>(rows.size()));
      }
    }
    b.item_rows.insert(b.item_rows.end(), g.item_rows.begin(), g.item_rows.end());
    b.ratings.insert(b.ratings.end(), g.ratings.begin(), g.ratings.end());
    b.delta_t.insert(b.delta_t.end(), g.delta_t.begin(), g.delta_t.end());
    b.feature_rows.insert(b.feature_rows.end(), g.feature_rows.begin(), g.feature_rows.end());

    auto global = [&](std::size_t local) {
      if (local == HeteroGraph::user_node()) return gi;
      if (local <= g.num_items()) return item_base + local - 1;
      return feature_base + local - 1 - g.num_items();
    };
    for (std::size_t t = 0; t < kEdgeTypes; ++t) {
      for (const auto& e : g.edges[t]) {
        b.src[t].push_back(global(e.src));
        b.dst[t].push_back(global(e.dst));
      }
    }
    b.user_nodes.push_back(gi);
    b.target_nodes.push_back(item_base);
    item_base += g.num_items();
    feature_base += g.num_features();
  }
  return b;
}

}  // namespace elcorec::gat
