#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dataset/types.hpp"

namespace elcorec::kb {

/// "The title is T. The <field> is <value>." with one sentence per field in
/// the item's feature order. Multi-valued fields join their values with ", ".
std::string render_description(const data::ItemProfile& item);

/// Lowercase word/number tokens. Bytes >= 0x80 count as word characters so
/// accented UTF-8 words stay whole.
std::vector<std::string> text_tokens(std::string_view text);

/// Hashed bag of tokens and adjacent-token bigrams: every feature lands in a
/// seeded bucket with a seeded sign; the sum is L2-normalised. Stands in for
/// an LM encoder's hidden state; anything with this signature can replace it.
std::vector<double> embed_text(std::string_view text, std::size_t dim, std::uint64_t seed = 0);

struct Retrieved {
  std::string item_id;
  double similarity = 0.0;
  std::size_t position = 0;  // index into the history that was searched
};

/// Item id -> unit-norm description embedding.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  KnowledgeBase(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const std::vector<std::string>& ids() const { return ids_; }

  /// Throws ConstructionError on a repeated id.
  void insert(const std::string& id, std::string description, std::vector<double> vec);

  /// Throws LookupError naming the id.
  std::span<const double> vector(const std::string& id) const;
  const std::string& description(const std::string& id) const;
  double similarity(const std::string& a, const std::string& b) const;

  void save(const std::string& path) const;
  static KnowledgeBase load(const std::string& path);

 private:
  std::size_t slot(const std::string& id) const;

  std::size_t dim_ = 256;
  std::uint64_t seed_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::string> descriptions_;
  std::vector<double> vectors_;  // row-major [size x dim]
  std::unordered_map<std::string, std::size_t> index_;
};

KnowledgeBase build_kb(const std::vector<data::ItemPtr>& items, std::size_t dim = 256, std::uint64_t seed = 0);

/// Ordering key of a similarity. The hashed embedder yields many exactly
/// tied cosines that float rounding separates by an ulp or two; ranking on a
/// 1e-9 grid lets the recency tie-break see them as ties.
std::int64_t rank_key(double similarity);

/// The K history entries most similar to the target, by descending cosine;
/// equal similarities (same rank_key) prefer the later, more recent entry.
/// Histories no longer than K come back whole, still similarity-sorted.
std::vector<Retrieved> retrieve_topk(const KnowledgeBase& kb, const std::string& target_id,
                                     const std::vector<std::string>& history, std::size_t k);

}  // namespace elcorec::kb
