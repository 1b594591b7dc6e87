#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace elcorec::data {

/// Layout of one delimited file. Each column carries a role: "user_id",
/// "item_id", "rating", "timestamp", "title", the name of a declared feature
/// field, or "-" to skip it.
struct FileLayout {
  std::string separator = "\t";
  bool header = false;
  std::vector<std::string> columns;
  /// Feature fields holding several values, mapped to the value separator.
  std::map<std::string, std::string> multi_value;
};

struct Schema {
  std::string name = "dataset";
  /// "utf-8" or "latin-1"; latin-1 text is transcoded on load.
  std::string encoding = "utf-8";
  int rating_threshold = 3;
  FileLayout interactions;
  FileLayout items;
  FileLayout users;
  /// Declared feature order; descriptions and graph features follow it.
  std::vector<std::string> item_fields;
  std::vector<std::string> user_fields;
  /// When non-empty, a trailing "(YYYY)" is cut from titles and stored under
  /// this item field (ML-1M style titles).
  std::string year_from_title;

  nlohmann::ordered_json to_json() const;
};

Schema parse_schema(const nlohmann::json& j);
Schema load_schema(const std::string& path);

/// Schema of the files written by the synthetic generator.
Schema synthetic_schema();

}  // namespace elcorec::data
