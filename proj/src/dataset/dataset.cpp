#include "dataset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "common/error.hpp"
#include "common/hash.hpp"

namespace elcorec::data {

void Catalog::add_item(ItemProfile item) {
  const std::string id = item.id;
  item_index.emplace(id, items.size());
  items.push_back(std::make_shared<const ItemProfile>(std::move(item)));
}

void Catalog::add_user(UserProfile user) {
  const std::string id = user.id;
  user_index.emplace(id, users.size());
  users.push_back(std::make_shared<const UserProfile>(std::move(user)));
}

const ItemPtr& Catalog::item(const std::string& id) const {
  auto it = item_index.find(id);
  if (it == item_index.end()) throw LookupError("unknown item id '" + id + "'");
  return items[it->second];
}

const UserPtr& Catalog::user(const std::string& id) const {
  auto it = user_index.find(id);
  if (it == user_index.end()) throw LookupError("unknown user id '" + id + "'");
  return users[it->second];
}

std::string LoadReport::summary() const {
  std::ostringstream out;
  out << malformed << " malformed row(s)";
  for (const auto& m : examples) out << "\n  " << m.file << ":" << m.line << ": " << m.reason;
  return out.str();
}

namespace {

constexpr std::size_t kMaxExamples = 20;

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view line, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
  return out;
}

std::string latin1_to_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

// Accepts "4", "4.0" and the like; anything non-integral fails.
bool parse_integral(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v) || v != std::floor(v) || std::fabs(v) > 9.0e15) return false;
  out = static_cast<std::int64_t>(v);
  return true;
}

// Cuts a trailing "(YYYY)" off a title.
bool split_title_year(std::string& title, std::string& year) {
  const std::string t = trim(title);
  if (t.size() < 6 || t.back() != ')') return false;
  const auto open = t.rfind('(');
  if (open == std::string::npos || t.size() - open != 6) return false;
  const std::string digits = t.substr(open + 1, 4);
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
  year = digits;
  title = trim(t.substr(0, open));
  return !title.empty();
}

class RowReader {
 public:
  RowReader(const std::string& path, const FileLayout& layout, const Schema& schema, LoadReport& report)
      : path_(path), layout_(layout), schema_(schema), report_(report), in_(path) {
    if (!in_) throw IoError("cannot open '" + path + "'");
  }

  // Next well-formed row (fields trimmed and transcoded); false at EOF.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line_no_ == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (layout_.header && line_no_ == 1) continue;
      if (trim(line).empty()) continue;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (schema_.encoding == "latin-1") line = latin1_to_utf8(line);
      fields = split(line, layout_.separator);
      if (fields.size() != layout_.columns.size()) {
        malformed("expected " + std::to_string(layout_.columns.size()) + " fields, got " + std::to_string(fields.size()));
        continue;
      }
      for (auto& f : fields) f = trim(f);
      return true;
    }
    return false;
  }

  void malformed(const std::string& reason) {
    ++report_.malformed;
    if (report_.examples.size() < kMaxExamples) report_.examples.push_back({path_, line_no_, reason});
  }

  std::size_t line() const { return line_no_; }

 private:
  std::string path_;
  const FileLayout& layout_;
  const Schema& schema_;
  LoadReport& report_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

std::vector<Feature> collect_features(const std::vector<std::string>& fields, const FileLayout& layout,
                                      const std::vector<std::string>& declared,
                                      const std::map<std::string, std::string>& extra) {
  std::vector<Feature> out;
  for (const auto& name : declared) {
    std::vector<std::string> values;
    auto ex = extra.find(name);
    if (ex != extra.end()) {
      values.push_back(ex->second);
    } else {
      for (std::size_t c = 0; c < layout.columns.size(); ++c) {
        if (layout.columns[c] != name) continue;
        auto mv = layout.multi_value.find(name);
        if (mv != layout.multi_value.end()) {
          for (auto& v : split(fields[c], mv->second)) {
            auto t = trim(v);
            if (!t.empty()) values.push_back(std::move(t));
          }
        } else if (!fields[c].empty()) {
          values.push_back(fields[c]);
        }
      }
    }
    if (!values.empty()) out.push_back({name, std::move(values)});
  }
  return out;
}

std::ptrdiff_t column_of(const FileLayout& layout, const std::string& role) {
  auto it = std::find(layout.columns.begin(), layout.columns.end(), role);
  return it == layout.columns.end() ? -1 : it - layout.columns.begin();
}

}  // namespace

Dataset load_dataset(const std::string& interactions_path, const std::string& items_path,
                     const std::string& users_path, const Schema& schema) {
  Dataset ds;
  ds.schema = schema;
  std::vector<std::string> fields;

  if (!items_path.empty()) {
    if (schema.items.columns.empty()) throw FormatError("schema declares no items layout");
    RowReader reader(items_path, schema.items, schema, ds.report);
    const auto id_col = column_of(schema.items, "item_id");
    const auto title_col = column_of(schema.items, "title");
    while (reader.next(fields)) {
      ItemProfile item;
      item.id = fields[id_col];
      if (item.id.empty()) {
        reader.malformed("empty item id");
        continue;
      }
      if (ds.catalog.has_item(item.id)) {
        reader.malformed("duplicate item id '" + item.id + "'");
        continue;
      }
      item.title = title_col >= 0 ? fields[title_col] : "item " + item.id;
      std::map<std::string, std::string> extra;
      if (!schema.year_from_title.empty()) {
        std::string year;
        if (split_title_year(item.title, year)) extra[schema.year_from_title] = year;
      }
      if (item.title.empty()) {
        reader.malformed("empty title for item '" + item.id + "'");
        continue;
      }
      item.features = collect_features(fields, schema.items, schema.item_fields, extra);
      ds.catalog.add_item(std::move(item));
    }
  }

  if (!users_path.empty()) {
    if (schema.users.columns.empty()) throw FormatError("schema declares no users layout");
    RowReader reader(users_path, schema.users, schema, ds.report);
    const auto id_col = column_of(schema.users, "user_id");
    while (reader.next(fields)) {
      UserProfile user;
      user.id = fields[id_col];
      if (user.id.empty()) {
        reader.malformed("empty user id");
        continue;
      }
      if (ds.catalog.has_user(user.id)) {
        reader.malformed("duplicate user id '" + user.id + "'");
        continue;
      }
      user.features = collect_features(fields, schema.users, schema.user_fields, {});
      ds.catalog.add_user(std::move(user));
    }
  }

  if (interactions_path.empty()) return ds;
  const auto& lay = schema.interactions;
  const auto uc = column_of(lay, "user_id"), ic = column_of(lay, "item_id");
  const auto rc = column_of(lay, "rating"), tc = column_of(lay, "timestamp");
  std::vector<std::string> unresolved;
  std::size_t unresolved_count = 0;
  RowReader reader(interactions_path, lay, schema, ds.report);
  while (reader.next(fields)) {
    InteractionRecord rec;
    rec.user_id = fields[uc];
    rec.item_id = fields[ic];
    std::int64_t rating = 0, ts = 0;
    if (rec.user_id.empty() || rec.item_id.empty()) {
      reader.malformed("empty user or item id");
      continue;
    }
    if (!parse_integral(fields[rc], rating) || rating < 1 || rating > 5) {
      reader.malformed("rating '" + fields[rc] + "' is not an integer in 1..5");
      continue;
    }
    if (!parse_integral(fields[tc], ts) || ts < 0) {
      reader.malformed("timestamp '" + fields[tc] + "' is not a non-negative integer");
      continue;
    }
    rec.rating = static_cast<int>(rating);
    rec.timestamp = ts;
    rec.row = ds.records.size();

    std::string missing;
    if (!items_path.empty() && !ds.catalog.has_item(rec.item_id)) missing = "item '" + rec.item_id + "'";
    if (!users_path.empty() && !ds.catalog.has_user(rec.user_id))
      missing += (missing.empty() ? "" : ", ") + std::string("user '") + rec.user_id + "'";
    if (!missing.empty()) {
      if (++unresolved_count <= kMaxExamples)
        unresolved.push_back(interactions_path + ":" + std::to_string(reader.line()) + ": unknown " + missing);
      continue;
    }
    if (items_path.empty() && !ds.catalog.has_item(rec.item_id)) ds.catalog.add_item({rec.item_id, "item " + rec.item_id, {}});
    if (users_path.empty() && !ds.catalog.has_user(rec.user_id)) ds.catalog.add_user({rec.user_id, {}});
    ds.records.push_back(std::move(rec));
  }

  if (unresolved_count > 0) {
    std::string msg = std::to_string(unresolved_count) + " interaction row(s) reference unknown ids:";
    for (const auto& u : unresolved) msg += "\n  " + u;
    if (unresolved_count > unresolved.size()) msg += "\n  ...";
    throw ReferentialError(msg);
  }
  return ds;
}

int binarize(int rating, int threshold) {
  if (rating < 1 || rating > 5) throw DomainError("rating " + std::to_string(rating) + " outside 1..5");
  return rating > threshold ? 1 : 0;
}

std::vector<Sample> build_samples(const std::vector<InteractionRecord>& records, const Catalog& catalog,
                                  int threshold) {
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t r = 0; r < records.size(); ++r) {
    auto [it, fresh] = by_user.try_emplace(records[r].user_id);
    if (fresh) user_order.push_back(records[r].user_id);
    it->second.push_back(r);
  }

  std::vector<Sample> out;
  for (const auto& uid : user_order) {
    auto& idx = by_user[uid];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].timestamp < records[b].timestamp;
    });
    auto events = std::make_shared<std::vector<HistoryEntry>>();
    events->reserve(idx.size());
    for (auto r : idx) events->push_back({catalog.item(records[r].item_id), records[r].rating, records[r].timestamp});
    std::shared_ptr<const std::vector<HistoryEntry>> shared = events;
    const UserPtr& user = catalog.user(uid);

    // Prefix of strictly earlier events; equal timestamps do not count.
    std::size_t earlier = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& rec = records[idx[k]];
      while (earlier < k && (*events)[earlier].timestamp < rec.timestamp) ++earlier;
      if (earlier == 0) continue;
      Sample s;
      s.id = uid + ":" + std::to_string(k);
      s.user = user;
      s.target = (*events)[k].item;
      s.target_ts = rec.timestamp;
      s.rating = rec.rating;
      s.label = binarize(rec.rating, threshold);
      s.history = HistoryView(shared, earlier);
      s.source_row = rec.row;
      out.push_back(std::move(s));
    }
  }
  return out;
}

TemporalSplit split_temporal(const std::vector<Sample>& samples, std::array<double, 3> ratios) {
  double total = 0.0;
  std::size_t active = 0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw InvalidArgumentError("split ratios must be non-negative");
    total += r;
    if (r > 0.0) ++active;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw InvalidArgumentError("split ratios must sum to 1");
  const std::size_t n = samples.size();
  if (n < active)
    throw DegenerateSplitError(std::to_string(n) + " sample(s) cannot fill " + std::to_string(active) + " splits");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return samples[a].target_ts < samples[b].target_ts; });

  const auto nd = static_cast<double>(n);
  std::size_t b1 = static_cast<std::size_t>(std::llround(nd * ratios[0]));
  std::size_t b2 = static_cast<std::size_t>(std::llround(nd * (ratios[0] + ratios[1])));
  // Every split with a positive ratio keeps at least one sample.
  const std::size_t need1 = ratios[1] > 0 ? 1 : 0, need2 = ratios[2] > 0 ? 1 : 0;
  b2 = std::min(b2, n - need2);
  b1 = std::min(b1, b2 - std::min(b2, need1));
  if (ratios[0] > 0 && b1 == 0) b1 = 1;
  if (b2 < b1 + need1) b2 = b1 + need1;

  TemporalSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < b1 ? out.train : (i < b2 ? out.valid : out.test);
    dst.push_back(samples[order[i]]);
  }
  if (n > 1 && samples[order.front()].target_ts == samples[order.back()].target_ts)
    out.warnings.push_back("all target timestamps are identical; split follows file order");
  return out;
}

UserSplit split_by_user(const std::vector<Sample>& samples, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw InvalidArgumentError("train ratio must lie in (0, 1)");
  std::vector<std::string> users;
  {
    std::unordered_map<std::string, bool> seen;
    for (const auto& s : samples)
      if (seen.emplace(s.user->id, true).second) users.push_back(s.user->id);
  }
  if (users.size() < 2) throw DegenerateSplitError("user split needs at least 2 distinct users");
  std::sort(users.begin(), users.end(), [&](const std::string& a, const std::string& b) {
    const auto ha = stable_hash(a, seed), hb = stable_hash(b, seed);
    return ha != hb ? ha < hb : a < b;
  });
  const auto u = static_cast<double>(users.size());
  std::size_t n_test = static_cast<std::size_t>(std::llround(u * (1.0 - train_ratio)));
  n_test = std::clamp<std::size_t>(n_test, 1, users.size() - 1);
  std::unordered_map<std::string, bool> is_test;
  for (std::size_t i = 0; i < users.size(); ++i) is_test[users[i]] = i < n_test;

  UserSplit out;
  for (const auto& s : samples) (is_test[s.user->id] ? out.test : out.train).push_back(s);
  return out;
}

}  // namespace elcorec::data
