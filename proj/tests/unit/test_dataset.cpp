#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "common/error.hpp"
#include "dataset/dataset.hpp"
#include "dataset/sample_io.hpp"
#include "dataset/synth.hpp"

using namespace elcorec;
using namespace elcorec::data;
namespace fs = std::filesystem;

namespace {

const std::string kFix = ELCOREC_FIXTURE_DIR;

Dataset load_tiny() {
  const auto schema = load_schema(kFix + "/tiny/schema.json");
  return load_dataset(kFix + "/tiny/ratings.dat", kFix + "/tiny/movies.dat", kFix + "/tiny/users.dat", schema);
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("elcorec_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Pairwise Mann-Whitney count, ties worth one half.
double pairwise_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return good / pairs;
}

std::vector<InteractionRecord> records_for(const std::vector<std::pair<std::string, std::int64_t>>& ev) {
  std::vector<InteractionRecord> r;
  for (const auto& [u, t] : ev) r.push_back({u, "i" + std::to_string(r.size()), 4, t, r.size()});
  return r;
}

Catalog catalog_for(const std::vector<InteractionRecord>& recs) {
  Catalog c;
  for (const auto& r : recs) {
    if (!c.has_item(r.item_id)) c.add_item({r.item_id, "title " + r.item_id, {}});
    if (!c.has_user(r.user_id)) c.add_user({r.user_id, {}});
  }
  return c;
}

std::vector<Sample> fake_samples(const std::vector<std::int64_t>& ts, std::size_t users = 1) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    Sample s;
    s.id = std::to_string(i);
    s.user = std::make_shared<const UserProfile>(UserProfile{"u" + std::to_string(i % users), {}});
    s.target = std::make_shared<const ItemProfile>(ItemProfile{"t", "t", {}});
    s.target_ts = ts[i];
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("binarize") {
  CHECK(binarize(5) == 1);
  CHECK(binarize(3) == 0);
  CHECK(binarize(1) == 0);
  CHECK(binarize(4) == 1);
  CHECK(binarize(4, 4) == 0);
  CHECK_THROWS_AS(binarize(0), DomainError);
  CHECK_THROWS_AS(binarize(6), DomainError);
  for (int r = 1; r < 5; ++r) CHECK(binarize(r) <= binarize(r + 1));
}

TEST_CASE("load_dataset parses the hand-written fixture exactly") {
  const auto ds = load_tiny();
  CHECK(ds.report.malformed == 0);
  REQUIRE(ds.records.size() == 10);
  const std::vector<std::tuple<std::string, std::string, int, std::int64_t>> expected = {
      {"1", "101", 5, 100}, {"1", "102", 3, 200}, {"1", "103", 4, 300}, {"2", "101", 2, 150},
      {"2", "104", 5, 150}, {"2", "102", 1, 400}, {"3", "103", 4, 500}, {"1", "104", 2, 250},
      {"3", "101", 3, 600}, {"2", "103", 4, 420}};
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& r = ds.records[i];
    CHECK(std::tie(r.user_id, r.item_id, r.rating, r.timestamp) == expected[i]);
    CHECK(r.row == i);
  }

  REQUIRE(ds.catalog.items.size() == 4);
  const auto& heat = *ds.catalog.item("101");
  CHECK(heat.title == "Heat");
  REQUIRE(heat.features.size() == 2);
  CHECK(heat.features[0] == Feature{"genre", {"Action", "Crime", "Thriller"}});
  CHECK(heat.features[1] == Feature{"year", {"1995"}});
  CHECK(ds.catalog.item("103")->title == "Terminator 2: Judgment Day");
  // Latin-1 input comes out as UTF-8; no year suffix leaves the field absent.
  const auto& cafe = *ds.catalog.item("104");
  CHECK(cafe.title == "Caf\xC3\xA9 Short");
  REQUIRE(cafe.features.size() == 1);
  CHECK(cafe.features[0].field == "genre");

  REQUIRE(ds.catalog.users.size() == 3);
  const auto& u2 = *ds.catalog.user("2");
  REQUIRE(u2.features.size() == 3);
  CHECK(u2.features[0] == Feature{"gender", {"M"}});
  CHECK(u2.features[1] == Feature{"age", {"56"}});
  CHECK(u2.features[2] == Feature{"occupation", {"16"}});
}

TEST_CASE("load_dataset counts malformed rows instead of dropping them silently") {
  const auto schema = load_schema(kFix + "/bad/schema.json");
  const auto ds = load_dataset(kFix + "/bad/ratings.dat", kFix + "/bad/movies.dat", kFix + "/bad/users.dat", schema);
  CHECK(ds.records.size() == 2);
  CHECK(ds.report.malformed == 4);
  REQUIRE(ds.report.examples.size() == 4);
  CHECK(ds.report.examples[0].line == 2);
  CHECK(ds.report.examples[1].line == 3);
  CHECK(ds.report.examples[2].line == 6);
  CHECK(ds.report.examples[3].line == 7);
  CHECK(ds.report.summary().find("4 malformed") == 0);
}

TEST_CASE("load_dataset reports unresolved ids with their rows") {
  const auto schema = load_schema(kFix + "/bad/schema.json");
  try {
    load_dataset(kFix + "/bad/dangling.dat", kFix + "/bad/movies.dat", kFix + "/bad/users.dat", schema);
    FAIL("expected a referential error");
  } catch (const ReferentialError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2 interaction row(s)") != std::string::npos);
    CHECK(msg.find("dangling.dat:2") != std::string::npos);
    CHECK(msg.find("item '999'") != std::string::npos);
    CHECK(msg.find("dangling.dat:3") != std::string::npos);
    CHECK(msg.find("user '7'") != std::string::npos);
  }
}

TEST_CASE("empty interactions file gives no records and no samples") {
  auto schema = synthetic_schema();
  const auto ds = load_dataset(kFix + "/tiny/empty.tsv", "", "", schema);
  CHECK(ds.records.empty());
  CHECK(ds.report.malformed == 0);
  CHECK(build_samples(ds.records, ds.catalog).empty());
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(load_schema(kFix + "/nope.json"), IoError);
  nlohmann::json j = {{"interactions", {{"columns", {"user_id", "item_id", "rating"}}}}};
  CHECK_THROWS_AS(parse_schema(j), FormatError);
  j = {{"interactions", {{"columns", {"user_id", "item_id", "rating", "timestamp", "mystery"}}}}};
  CHECK_THROWS_AS(parse_schema(j), FormatError);
  const auto s = synthetic_schema();
  const auto back = parse_schema(nlohmann::json::parse(s.to_json().dump()));
  CHECK(back.item_fields == s.item_fields);
  CHECK(back.items.columns == s.items.columns);
}

TEST_CASE("build_samples on simple timelines") {
  auto recs = records_for({{"u", 1}, {"u", 2}, {"u", 3}});
  auto samples = build_samples(recs, catalog_for(recs));
  REQUIRE(samples.size() == 2);
  CHECK(samples[0].target_ts == 2);
  CHECK(samples[0].history.size() == 1);
  CHECK(samples[1].target_ts == 3);
  CHECK(samples[1].history.size() == 2);

  recs = records_for({{"solo", 7}});
  CHECK(build_samples(recs, catalog_for(recs)).empty());
}

TEST_CASE("build_samples on the three-user fixture") {
  const auto ds = load_tiny();
  const auto samples = build_samples(ds.records, ds.catalog, ds.schema.rating_threshold);

  struct Expect {
    std::string id, target;
    std::int64_t ts;
    int label;
    std::vector<std::string> history;
  };
  // User 2 has two events at t=150; the second has no strictly earlier event.
  const std::vector<Expect> expected = {
      {"1:1", "102", 200, 0, {"101"}},
      {"1:2", "104", 250, 0, {"101", "102"}},
      {"1:3", "103", 300, 1, {"101", "102", "104"}},
      {"2:2", "102", 400, 0, {"101", "104"}},
      {"2:3", "103", 420, 1, {"101", "104", "102"}},
      {"3:1", "101", 600, 0, {"103"}},
  };
  REQUIRE(samples.size() == expected.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    INFO(s.id);
    CHECK(s.id == expected[i].id);
    CHECK(s.target->id == expected[i].target);
    CHECK(s.target_ts == expected[i].ts);
    CHECK(s.label == expected[i].label);
    std::vector<std::string> h;
    for (const auto& e : s.history) {
      h.push_back(e.item->id);
      CHECK(e.timestamp < s.target_ts);
    }
    CHECK(h == expected[i].history);
    CHECK(s.user->id == s.id.substr(0, 1));
  }
  CHECK(samples[2].history[2].rating == 2);
  CHECK(samples[0].source_row == 1);
}

TEST_CASE("split_temporal") {
  SUBCASE("exact quantiles") {
    std::vector<std::int64_t> ts;
    for (int t = 10; t >= 1; --t) ts.push_back(t);
    const auto sp = split_temporal(fake_samples(ts));
    REQUIRE(sp.train.size() == 8);
    REQUIRE(sp.valid.size() == 1);
    REQUIRE(sp.test.size() == 1);
    for (std::size_t i = 0; i < 8; ++i) CHECK(sp.train[i].target_ts == static_cast<std::int64_t>(i + 1));
    CHECK(sp.valid[0].target_ts == 9);
    CHECK(sp.test[0].target_ts == 10);
    CHECK(sp.warnings.empty());
  }
  SUBCASE("identical timestamps keep file order and warn") {
    const auto sp = split_temporal(fake_samples(std::vector<std::int64_t>(10, 5)));
    CHECK(sp.train.size() == 8);
    CHECK(sp.train.front().id == "0");
    CHECK(sp.valid[0].id == "8");
    CHECK(sp.test[0].id == "9");
    REQUIRE(sp.warnings.size() == 1);
  }
  SUBCASE("1000 samples") {
    std::vector<std::int64_t> ts;
    for (int i = 0; i < 1000; ++i) ts.push_back((i * 7919) % 313);
    const auto sp = split_temporal(fake_samples(ts));
    CHECK(sp.train.size() == 800);
    CHECK(sp.valid.size() == 100);
    CHECK(sp.test.size() == 100);
    std::int64_t max_train = 0, min_valid = 1 << 30, max_valid = 0, min_test = 1 << 30;
    for (const auto& s : sp.train) max_train = std::max(max_train, s.target_ts);
    for (const auto& s : sp.valid) min_valid = std::min(min_valid, s.target_ts), max_valid = std::max(max_valid, s.target_ts);
    for (const auto& s : sp.test) min_test = std::min(min_test, s.target_ts);
    CHECK(max_train <= min_valid);
    CHECK(max_valid <= min_test);
  }
  SUBCASE("small and invalid inputs") {
    const auto sp = split_temporal(fake_samples({1, 2, 3}));
    CHECK(sp.train.size() == 1);
    CHECK(sp.valid.size() == 1);
    CHECK(sp.test.size() == 1);
    CHECK_THROWS_AS(split_temporal(fake_samples({1, 2})), DegenerateSplitError);
    CHECK_THROWS_AS(split_temporal(fake_samples({1, 2, 3}), {0.5, 0.2, 0.2}), InvalidArgumentError);
  }
}

TEST_CASE("split_by_user") {
  std::vector<std::int64_t> ts(50);
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<std::int64_t>(i);
  const auto samples = fake_samples(ts, 10);
  const auto a = split_by_user(samples, 0.9, 42);
  const auto b = split_by_user(samples, 0.9, 42);
  std::set<std::string> train_users, test_users;
  for (const auto& s : a.train) train_users.insert(s.user->id);
  for (const auto& s : a.test) test_users.insert(s.user->id);
  CHECK(train_users.size() == 9);
  CHECK(test_users.size() == 1);
  for (const auto& u : test_users) CHECK(train_users.count(u) == 0);
  CHECK(a.train.size() + a.test.size() == samples.size());
  REQUIRE(a.test.size() == b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].id == b.test[i].id);

  std::set<std::string> seen_test;
  for (std::uint64_t seed = 0; seed < 20; ++seed) seen_test.insert(split_by_user(samples, 0.9, seed).test[0].user->id);
  CHECK(seen_test.size() > 1);

  CHECK_THROWS_AS(split_by_user(fake_samples({1, 2, 3}, 1)), DegenerateSplitError);
}

TEST_CASE("sample files round-trip") {
  const auto ds = load_tiny();
  const auto samples = build_samples(ds.records, ds.catalog);
  const auto dir = temp_dir("samples");
  write_samples((dir / "s.jsonl").string(), samples);
  const auto back = read_samples((dir / "s.jsonl").string());
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == samples[i].id);
    CHECK(*back[i].user == *samples[i].user);
    CHECK(*back[i].target == *samples[i].target);
    CHECK(back[i].target_ts == samples[i].target_ts);
    CHECK(back[i].label == samples[i].label);
    REQUIRE(back[i].history.size() == samples[i].history.size());
    for (std::size_t k = 0; k < back[i].history.size(); ++k) {
      CHECK(*back[i].history[k].item == *samples[i].history[k].item);
      CHECK(back[i].history[k].rating == samples[i].history[k].rating);
      CHECK(back[i].history[k].timestamp == samples[i].history[k].timestamp);
    }
  }
  // Same item decoded twice shares one profile.
  CHECK(back[1].history[0].item.get() == back[0].history[0].item.get());

  write_samples((dir / "t.jsonl").string(), samples, 1);
  const auto cut = read_samples((dir / "t.jsonl").string());
  CHECK(cut[2].history.size() == 1);
  CHECK(cut[2].history[0].item->id == "104");

  std::ofstream(dir / "bad.jsonl") << "{\"user\": {\"id\": \"1\"}}\n";
  CHECK_THROWS_AS(read_samples((dir / "bad.jsonl").string()), FormatError);
}

TEST_CASE("synthetic generator is deterministic and reloadable") {
  SynthConfig cfg;
  cfg.n_users = 40;
  cfg.n_items = 30;
  cfg.seed = 9;
  const auto a = synth_generate(cfg);
  const auto b = synth_generate(cfg);
  const auto da = temp_dir("synth_a"), db = temp_dir("synth_b");
  write_synth(a, da.string());
  write_synth(b, db.string());
  for (const char* f : {"interactions.tsv", "items.tsv", "users.tsv", "schema.json", "latents.json"})
    CHECK(slurp(da / f) == slurp(db / f));
  cfg.seed = 10;
  CHECK(synth_generate(cfg).latents.planted_prob != a.latents.planted_prob);

  const auto schema = load_schema((da / "schema.json").string());
  const auto re = load_dataset((da / "interactions.tsv").string(), (da / "items.tsv").string(),
                               (da / "users.tsv").string(), schema);
  CHECK(re.report.malformed == 0);
  REQUIRE(re.records.size() == a.data.records.size());
  for (std::size_t i = 0; i < re.records.size(); ++i) {
    CHECK(re.records[i].rating == a.data.records[i].rating);
    CHECK(re.records[i].timestamp == a.data.records[i].timestamp);
  }
  CHECK(*re.catalog.items[3] == *a.data.catalog.items[3]);
  CHECK(read_planted_prob((da / "latents.json").string()) == a.latents.planted_prob);

  cfg.n_users = 1;
  CHECK_THROWS_AS(synth_generate(cfg), InvalidArgumentError);
}

TEST_CASE("synthetic generator without signal gives coin-flip labels") {
  SynthConfig cfg;
  cfg.a = cfg.b = cfg.c = 0.0;
  cfg.n_users = 400;
  cfg.seed = 3;
  const auto ds = synth_generate(cfg);
  const auto samples = build_samples(ds.data.records, ds.data.catalog);
  REQUIRE(samples.size() >= 10000);
  double pos = 0;
  for (const auto& s : samples) pos += s.label;
  CHECK(pos / static_cast<double>(samples.size()) == doctest::Approx(0.5).epsilon(0.02));
  for (double p : ds.latents.planted_prob) CHECK(p == 0.5);

  // Any score, here the item's mean label over the first half, is a coin flip
  // on the second half.
  const std::size_t half = samples.size() / 2;
  std::map<std::string, std::pair<double, double>> item_stats;
  for (std::size_t i = 0; i < half; ++i) {
    auto& st = item_stats[samples[i].target->id];
    st.first += samples[i].label;
    st.second += 1;
  }
  std::vector<int> y;
  std::vector<double> s;
  for (std::size_t i = half; i < samples.size() && y.size() < 5000; ++i) {
    const auto& st = item_stats[samples[i].target->id];
    y.push_back(samples[i].label);
    s.push_back(st.second > 0 ? st.first / st.second : 0.5);
  }
  CHECK(std::fabs(pairwise_auc(y, s) - 0.5) <= 0.02);
}

TEST_CASE("rating-driven planted rule: Bayes oracle strong, titles weak") {
  SynthConfig cfg;
  cfg.seed = 1;
  const auto ds = synth_generate(cfg);
  const auto samples = build_samples(ds.data.records, ds.data.catalog);
  std::vector<int> y;
  std::vector<double> p;
  for (std::size_t i = 0; i < samples.size() && y.size() < 4000; i += 5) {
    y.push_back(samples[i].label);
    p.push_back(ds.latents.planted_prob[samples[i].source_row]);
  }
  const double bayes = pairwise_auc(y, p);
  MESSAGE("Bayes oracle AUC " << bayes);
  CHECK(bayes >= 0.85);

  // Best title-only predictor: the title's empirical click rate on other samples.
  std::map<std::string, std::pair<double, double>> by_title;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i % 5 == 0) continue;
    auto& st = by_title[samples[i].target->title];
    st.first += samples[i].label;
    st.second += 1;
  }
  std::vector<double> t;
  for (std::size_t i = 0, k = 0; i < samples.size() && k < y.size(); i += 5, ++k) {
    const auto& st = by_title[samples[i].target->title];
    t.push_back(st.first / st.second);
  }
  const double title_auc = pairwise_auc(y, t);
  MESSAGE("title-only AUC " << title_auc);
  CHECK(title_auc < 0.70);
  CHECK(bayes - title_auc > 0.2);
}
