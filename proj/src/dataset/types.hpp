#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace elcorec::data {

/// One categorical field. Multi-valued fields (e.g. several genres) keep every
/// value in file order.
struct Feature {
  std::string field;
  std::vector<std::string> values;

  bool operator==(const Feature&) const = default;
};

struct ItemProfile {
  std::string id;
  std::string title;
  std::vector<Feature> features;  // ordered by the schema's declared field order

  bool operator==(const ItemProfile&) const = default;
};

struct UserProfile {
  std::string id;
  std::vector<Feature> features;

  bool operator==(const UserProfile&) const = default;
};

using ItemPtr = std::shared_ptr<const ItemProfile>;
using UserPtr = std::shared_ptr<const UserProfile>;

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  int rating = 0;               // 1..5
  std::int64_t timestamp = 0;   // Unix seconds
  std::size_t row = 0;          // position in the source file, used for tie-breaks
};

struct HistoryEntry {
  ItemPtr item;
  int rating = 0;
  std::int64_t timestamp = 0;
};

/// Read-only prefix of a user's chronological event list. Samples of one user
/// share the same backing vector, so storing "the full history" per sample
/// costs O(1).
class HistoryView {
 public:
  HistoryView() = default;
  HistoryView(std::shared_ptr<const std::vector<HistoryEntry>> events, std::size_t length)
      : events_(std::move(events)), length_(length) {}
  explicit HistoryView(std::vector<HistoryEntry> events)
      : events_(std::make_shared<const std::vector<HistoryEntry>>(std::move(events))), length_(events_->size()) {}

  std::size_t size() const { return length_; }
  bool empty() const { return length_ == 0; }
  const HistoryEntry& operator[](std::size_t i) const { return (*events_)[i]; }
  const HistoryEntry& back() const { return (*events_)[length_ - 1]; }
  auto begin() const { return events_->begin(); }
  auto end() const { return events_->begin() + static_cast<std::ptrdiff_t>(length_); }

 private:
  std::shared_ptr<const std::vector<HistoryEntry>> events_ = std::make_shared<const std::vector<HistoryEntry>>();
  std::size_t length_ = 0;
};

/// A labelled CTR instance: the user, the target item and every earlier
/// interaction of that user.
struct Sample {
  std::string id;
  UserPtr user;
  ItemPtr target;
  std::int64_t target_ts = 0;
  int rating = 0;  // rating of the target interaction, before binarisation
  int label = 0;
  HistoryView history;  // ascending by timestamp, all strictly before target_ts
  std::size_t source_row = 0;
};

/// Item and user profiles keyed by id, in file order.
struct Catalog {
  std::vector<ItemPtr> items;
  std::vector<UserPtr> users;
  std::unordered_map<std::string, std::size_t> item_index;
  std::unordered_map<std::string, std::size_t> user_index;

  void add_item(ItemProfile item);
  void add_user(UserProfile user);
  const ItemPtr& item(const std::string& id) const;
  const UserPtr& user(const std::string& id) const;
  bool has_item(const std::string& id) const { return item_index.count(id) != 0; }
  bool has_user(const std::string& id) const { return user_index.count(id) != 0; }
};

}  // namespace elcorec::data
