#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dataset/schema.hpp"
#include "dataset/types.hpp"

namespace elcorec::data {

struct MalformedRow {
  std::string file;
  std::size_t line = 0;  // 1-based, header included
  std::string reason;
};

struct LoadReport {
  std::size_t malformed = 0;
  std::vector<MalformedRow> examples;  // first few, for diagnostics
  std::string summary() const;
};

struct Dataset {
  Schema schema;
  std::vector<InteractionRecord> records;  // file order
  Catalog catalog;
  LoadReport report;
};

/// Parses the three delimited files. Rows that do not fit the layout are
/// counted in the report, never dropped silently. An empty items/users path
/// means "derive bare profiles from the interactions"; an empty interactions
/// path loads the profile files only.
Dataset load_dataset(const std::string& interactions_path, const std::string& items_path,
                     const std::string& users_path, const Schema& schema);

/// 1 if rating > threshold. Ratings outside 1..5 raise DomainError.
int binarize(int rating, int threshold = 3);

/// One sample per interaction with at least one strictly earlier interaction
/// of the same user. Records are ordered per user by timestamp, ties by file
/// row. Output is grouped by user (first appearance order), then by time.
std::vector<Sample> build_samples(const std::vector<InteractionRecord>& records, const Catalog& catalog,
                                  int threshold = 3);

struct TemporalSplit {
  std::vector<Sample> train, valid, test;
  std::vector<std::string> warnings;
};

/// Orders samples by target timestamp (stable) and cuts at the cumulative
/// ratio positions, so every train timestamp <= every valid timestamp <=
/// every test timestamp.
TemporalSplit split_temporal(const std::vector<Sample>& samples, std::array<double, 3> ratios = {0.8, 0.1, 0.1});

struct UserSplit {
  std::vector<Sample> train, test;
};

/// Assigns whole users to train or test by a seeded hash of the user id.
UserSplit split_by_user(const std::vector<Sample>& samples, double train_ratio = 0.9, std::uint64_t seed = 0);

}  // namespace elcorec::data
