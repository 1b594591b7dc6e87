#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace elcorec::harness {

struct ScoreRow {
  std::string id;
  double p_click = 0.0;
  int label = 0;
};

/// One {"id", "p_click", "label"} object per line.
void write_scores(const std::string& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores(const std::string& path);

/// Pretty-printed JSON with a trailing newline.
void write_json(const std::string& path, const nlohmann::ordered_json& j);
nlohmann::ordered_json read_json(const std::string& path);

/// Row-major float64 matrix in the checkpoint container under "embeddings",
/// with the row ids in the header.
void write_embeddings(const std::string& path, const std::vector<std::string>& ids, const std::vector<double>& rows,
                      std::size_t dim);

}  // namespace elcorec::harness
