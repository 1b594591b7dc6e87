#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <unordered_map>
#include <vector>

#include "dataset/types.hpp"

namespace elcorec::data {

// Sample files are JSON lines:
//   {"id", "user": {id, features}, "target": {id, title, features},
//    "target_ts", "rating", "history": [{"item", "rating", "ts"}], "label",
//    "source_row"}
// Single-valued features serialise as a string, multi-valued ones as an array.

nlohmann::ordered_json features_to_json(const std::vector<Feature>& features);
std::vector<Feature> features_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json item_to_json(const ItemProfile& item);
nlohmann::ordered_json user_to_json(const UserProfile& user);

/// Reuses one shared profile per id while decoding a file.
class ProfileInterner {
 public:
  ItemPtr item(const nlohmann::ordered_json& j);
  UserPtr user(const nlohmann::ordered_json& j);

 private:
  std::unordered_map<std::string, ItemPtr> items_;
  std::unordered_map<std::string, UserPtr> users_;
};

/// `max_history` > 0 keeps only that many most recent history entries.
nlohmann::ordered_json sample_to_json(const Sample& s, std::size_t max_history = 0);
Sample sample_from_json(const nlohmann::ordered_json& j, ProfileInterner& interner);

void write_samples(const std::string& path, const std::vector<Sample>& samples, std::size_t max_history = 0);
std::vector<Sample> read_samples(const std::string& path);

}  // namespace elcorec::data
