#include "harness/report_io.hpp"

#include <fstream>

#include "common/error.hpp"
#include "numerics/checkpoint.hpp"

namespace elcorec::harness {

void write_scores(const std::string& path, const std::vector<ScoreRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["p_click"] = r.p_click;
    j["label"] = r.label;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ScoreRow> read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<ScoreRow> rows;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoreRow r{j.at("id").get<std::string>(), j.at("p_click").get<double>(), j.at("label").get<int>()};
      if (r.label != 0 && r.label != 1) throw FormatError("label must be 0 or 1");
      if (!(r.p_click >= 0.0 && r.p_click <= 1.0)) throw FormatError("p_click must be in [0, 1]");
      rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(n) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

nlohmann::ordered_json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_embeddings(const std::string& path, const std::vector<std::string>& ids, const std::vector<double>& rows,
                      std::size_t dim) {
  if (rows.size() != ids.size() * dim) throw DimensionError("write_embeddings: row count does not match ids");
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "embeddings";
  ckpt.meta["ids"] = ids;
  ckpt.add("embeddings", {ids.size(), dim}, rows);
  nn::write_checkpoint(path, ckpt);
}

}  // namespace elcorec::harness
