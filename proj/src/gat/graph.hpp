#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <unordered_map>
#include <vector>

#include "dataset/types.hpp"

namespace elcorec::gat {

/// sin(dt / 10000^(p/d)) at even p, cos(dt / 10000^(p/d)) at odd p.
/// Throws DomainError for negative dt or odd d.
std::vector<double> time_encode(double delta_t, std::size_t d);

/// Id -> row maps for every embedding table. Row 0 of each table is the
/// shared out-of-vocabulary row.
class Vocab {
 public:
  std::size_t user(const std::string& id) const { return lookup(users_, id); }
  std::size_t item(const std::string& id) const { return lookup(items_, id); }
  /// Item feature value, keyed by field and value.
  std::size_t feature(const std::string& field, const std::string& value) const;
  std::size_t user_feature(const std::string& field, const std::string& value) const;

  std::size_t user_rows() const { return users_.size() + 1; }
  std::size_t item_rows() const { return items_.size() + 1; }
  std::size_t feature_rows() const { return features_.size() + 1; }
  std::size_t user_feature_rows() const { return user_features_.size() + 1; }
  const std::vector<std::string>& user_fields() const { return user_fields_; }

  /// Every id and value seen in the samples (targets and full histories).
  static Vocab build(const std::vector<data::Sample>& samples);

  nlohmann::ordered_json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  using Map = std::unordered_map<std::string, std::size_t>;
  static std::size_t lookup(const Map& m, const std::string& key) {
    auto it = m.find(key);
    return it == m.end() ? 0 : it->second;
  }
  static void add(Map& m, std::vector<std::string>& order, const std::string& key);

  Map users_, items_, features_, user_features_;
  std::vector<std::string> user_order_, item_order_, feature_order_, user_feature_order_;
  std::vector<std::string> user_fields_;
};

enum EdgeType : std::size_t { Interacted = 0, ClickBy = 1, BelongTo = 2, HasInstance = 3 };
inline constexpr std::size_t kEdgeTypes = 4;
const char* edge_type_name(std::size_t t);

struct Edge {
  std::size_t src;
  std::size_t dst;
};

/// Per-sample user-item-feature graph. Node ids are local: the user first,
/// then item nodes (target first, then history items oldest to newest), then
/// deduplicated feature nodes.
struct HeteroGraph {
  // user node
  std::size_t user_row = 0;
  std::vector<std::vector<std::size_t>> user_feature_rows;  // per declared user field; empty = OOV
  // item nodes
  std::vector<std::size_t> item_rows;
  std::vector<std::size_t> ratings;       // 0 = no rating (target)
  std::vector<double> delta_t;            // scaled gap to the target time
  // feature nodes
  std::vector<std::size_t> feature_rows;
  std::array<std::vector<Edge>, kEdgeTypes> edges;
  std::size_t oov = 0;  // lookups that fell back to an OOV row

  std::size_t num_items() const { return item_rows.size(); }
  std::size_t num_features() const { return feature_rows.size(); }
  std::size_t num_nodes() const { return 1 + num_items() + num_features(); }
  std::size_t num_edges() const;
  // local node ids
  static constexpr std::size_t user_node() { return 0; }
  static constexpr std::size_t target_node() { return 1; }
  std::size_t item_node(std::size_t i) const { return 1 + i; }
  std::size_t feature_node(std::size_t f) const { return 1 + num_items() + f; }
};

/// Uses the K most recent history entries. Gaps are (target_ts - ts) /
/// time_scale; the target's own gap is 0.
HeteroGraph build_graph(const data::Sample& sample, const Vocab& vocab, std::size_t k, double time_scale = 86400.0);

/// Several graphs stacked into one disjoint graph. Global order: all user
/// nodes, then all item nodes, then all feature nodes.
struct BatchGraph {
  std::size_t num_users = 0, num_items = 0, num_features = 0;
  std::vector<std::size_t> user_rows;
  /// Per declared user field: the value rows, the user each belongs to, and
  /// 1/(values of that user) for averaging multi-valued fields.
  struct FieldValues {
    std::vector<std::size_t> rows, owner;
    std::vector<double> inv_count;  // per user
  };
  std::vector<FieldValues> user_fields;
  std::vector<std::size_t> item_rows, ratings;
  std::vector<double> delta_t;
  std::vector<std::size_t> feature_rows;
  std::array<std::vector<std::size_t>, kEdgeTypes> src, dst;
  std::vector<std::size_t> user_nodes;    // per graph, global id
  std::vector<std::size_t> target_nodes;  // per graph, global id

  std::size_t num_nodes() const { return num_users + num_items + num_features; }
};

BatchGraph batch_graphs(const std::vector<const HeteroGraph*>& graphs);

}  // namespace elcorec::gat
