#include "dataset/schema.hpp"

#include <algorithm>
#include <fstream>

#include "common/error.hpp"

namespace elcorec::data {
namespace {

const std::vector<std::string> kBuiltinRoles = {"user_id", "item_id", "rating", "timestamp", "title", "-"};

FileLayout parse_layout(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object()) throw FormatError("schema: '" + what + "' must be an object");
  FileLayout f;
  f.separator = j.value("separator", std::string("\t"));
  if (f.separator.empty()) throw FormatError("schema: '" + what + "' separator is empty");
  f.header = j.value("header", false);
  if (!j.contains("columns") || !j["columns"].is_array() || j["columns"].empty())
    throw FormatError("schema: '" + what + "' needs a non-empty 'columns' array");
  for (const auto& c : j["columns"]) f.columns.push_back(c.get<std::string>());
  if (j.contains("multi_value"))
    for (const auto& [k, v] : j["multi_value"].items()) f.multi_value[k] = v.get<std::string>();
  return f;
}

nlohmann::ordered_json layout_json(const FileLayout& f) {
  nlohmann::ordered_json j;
  j["separator"] = f.separator;
  j["header"] = f.header;
  j["columns"] = f.columns;
  if (!f.multi_value.empty()) j["multi_value"] = f.multi_value;
  return j;
}

void check_roles(const FileLayout& f, const std::vector<std::string>& fields, const std::string& what,
                 std::initializer_list<const char*> required) {
  for (const auto& c : f.columns) {
    const bool builtin = std::find(kBuiltinRoles.begin(), kBuiltinRoles.end(), c) != kBuiltinRoles.end();
    const bool feature = std::find(fields.begin(), fields.end(), c) != fields.end();
    if (!builtin && !feature) throw FormatError("schema: " + what + " column '" + c + "' is neither a role nor a declared field");
  }
  for (const char* r : required)
    if (std::find(f.columns.begin(), f.columns.end(), r) == f.columns.end())
      throw FormatError("schema: " + what + " file lacks a '" + r + "' column");
}

}  // namespace

Schema parse_schema(const nlohmann::json& j) {
  Schema s;
  s.name = j.value("name", s.name);
  s.encoding = j.value("encoding", s.encoding);
  if (s.encoding != "utf-8" && s.encoding != "latin-1") throw FormatError("schema: unsupported encoding '" + s.encoding + "'");
  s.rating_threshold = j.value("rating_threshold", s.rating_threshold);
  if (j.contains("item_fields")) s.item_fields = j["item_fields"].get<std::vector<std::string>>();
  if (j.contains("user_fields")) s.user_fields = j["user_fields"].get<std::vector<std::string>>();
  s.year_from_title = j.value("year_from_title", std::string());
  if (!j.contains("interactions")) throw FormatError("schema: missing 'interactions'");
  s.interactions = parse_layout(j["interactions"], "interactions");
  check_roles(s.interactions, {}, "interactions", {"user_id", "item_id", "rating", "timestamp"});
  if (j.contains("items")) {
    s.items = parse_layout(j["items"], "items");
    check_roles(s.items, s.item_fields, "items", {"item_id"});
  }
  if (j.contains("users")) {
    s.users = parse_layout(j["users"], "users");
    check_roles(s.users, s.user_fields, "users", {"user_id"});
  }
  if (!s.year_from_title.empty() &&
      std::find(s.item_fields.begin(), s.item_fields.end(), s.year_from_title) == s.item_fields.end())
    throw FormatError("schema: year_from_title field '" + s.year_from_title + "' is not a declared item field");
  return s;
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("schema '" + path + "': " + e.what());
  }
  return parse_schema(j);
}

nlohmann::ordered_json Schema::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["encoding"] = encoding;
  j["rating_threshold"] = rating_threshold;
  j["item_fields"] = item_fields;
  j["user_fields"] = user_fields;
  if (!year_from_title.empty()) j["year_from_title"] = year_from_title;
  j["interactions"] = layout_json(interactions);
  if (!items.columns.empty()) j["items"] = layout_json(items);
  if (!users.columns.empty()) j["users"] = layout_json(users);
  return j;
}

Schema synthetic_schema() {
  Schema s;
  s.name = "synthetic";
  s.item_fields = {"genre", "year"};
  s.user_fields = {"age", "occupation"};
  s.interactions = {"\t", true, {"user_id", "item_id", "rating", "timestamp"}, {}};
  s.items = {"\t", true, {"item_id", "title", "genre", "year"}, {}};
  s.users = {"\t", true, {"user_id", "age", "occupation"}, {}};
  return s;
}

}  // namespace elcorec::data
