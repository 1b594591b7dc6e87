#include "dataset/sample_io.hpp"

#include <fstream>

#include "common/error.hpp"

namespace elcorec::data {

nlohmann::ordered_json features_to_json(const std::vector<Feature>& features) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& f : features) {
    if (f.values.size() == 1)
      j[f.field] = f.values.front();
    else
      j[f.field] = f.values;
  }
  return j;
}

std::vector<Feature> features_from_json(const nlohmann::ordered_json& j) {
  std::vector<Feature> out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw FormatError("features must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    Feature f{k, {}};
    if (v.is_array())
      for (const auto& x : v) f.values.push_back(x.get<std::string>());
    else
      f.values.push_back(v.get<std::string>());
    out.push_back(std::move(f));
  }
  return out;
}

nlohmann::ordered_json item_to_json(const ItemProfile& item) {
  nlohmann::ordered_json j;
  j["id"] = item.id;
  j["title"] = item.title;
  j["features"] = features_to_json(item.features);
  return j;
}

nlohmann::ordered_json user_to_json(const UserProfile& user) {
  nlohmann::ordered_json j;
  j["id"] = user.id;
  j["features"] = features_to_json(user.features);
  return j;
}

ItemPtr ProfileInterner::item(const nlohmann::ordered_json& j) {
  ItemProfile p;
  p.id = j.at("id").get<std::string>();
  p.title = j.at("title").get<std::string>();
  if (p.title.empty()) throw FormatError("item '" + p.id + "' has an empty title");
  p.features = features_from_json(j.value("features", nlohmann::ordered_json()));
  auto it = items_.find(p.id);
  if (it != items_.end() && *it->second == p) return it->second;
  auto ptr = std::make_shared<const ItemProfile>(std::move(p));
  items_[ptr->id] = ptr;
  return ptr;
}

UserPtr ProfileInterner::user(const nlohmann::ordered_json& j) {
  UserProfile p;
  p.id = j.at("id").get<std::string>();
  p.features = features_from_json(j.value("features", nlohmann::ordered_json()));
  auto it = users_.find(p.id);
  if (it != users_.end() && *it->second == p) return it->second;
  auto ptr = std::make_shared<const UserProfile>(std::move(p));
  users_[ptr->id] = ptr;
  return ptr;
}

nlohmann::ordered_json sample_to_json(const Sample& s, std::size_t max_history) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["user"] = user_to_json(*s.user);
  j["target"] = item_to_json(*s.target);
  j["target_ts"] = s.target_ts;
  j["rating"] = s.rating;
  auto hist = nlohmann::ordered_json::array();
  const std::size_t n = s.history.size();
  const std::size_t first = (max_history > 0 && n > max_history) ? n - max_history : 0;
  for (std::size_t k = first; k < n; ++k) {
    const auto& h = s.history[k];
    nlohmann::ordered_json e;
    e["item"] = item_to_json(*h.item);
    e["rating"] = h.rating;
    e["ts"] = h.timestamp;
    hist.push_back(std::move(e));
  }
  j["history"] = std::move(hist);
  j["label"] = s.label;
  j["source_row"] = s.source_row;
  return j;
}

Sample sample_from_json(const nlohmann::ordered_json& j, ProfileInterner& interner) {
  Sample s;
  s.id = j.value("id", std::string());
  s.user = interner.user(j.at("user"));
  s.target = interner.item(j.at("target"));
  s.target_ts = j.at("target_ts").get<std::int64_t>();
  s.label = j.at("label").get<int>();
  if (s.label != 0 && s.label != 1) throw FormatError("sample '" + s.id + "': label must be 0 or 1");
  s.rating = j.value("rating", s.label ? 5 : 1);
  s.source_row = j.value("source_row", std::size_t{0});
  std::vector<HistoryEntry> events;
  for (const auto& e : j.at("history")) {
    HistoryEntry h{interner.item(e.at("item")), e.at("rating").get<int>(), e.at("ts").get<std::int64_t>()};
    if (h.rating < 1 || h.rating > 5) throw FormatError("sample '" + s.id + "': history rating outside 1..5");
    if (h.timestamp >= s.target_ts) throw FormatError("sample '" + s.id + "': history entry not before target");
    if (!events.empty() && h.timestamp < events.back().timestamp)
      throw FormatError("sample '" + s.id + "': history not chronological");
    events.push_back(std::move(h));
  }
  s.history = HistoryView(std::move(events));
  return s;
}

void write_samples(const std::string& path, const std::vector<Sample>& samples, std::size_t max_history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& s : samples) out << sample_to_json(s, max_history).dump() << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<Sample> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<Sample> out;
  ProfileInterner interner;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::ordered_json::parse(line), interner));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace elcorec::data
