#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "dataset/synth.hpp"
#include "kb/knowledge_base.hpp"
#include "numerics/checkpoint.hpp"

using namespace elcorec;
using namespace elcorec::kb;
using data::ItemProfile;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kGenres = {"Action", "Comedy", "Drama", "Horror", "Romance", "Western", "Musical", "Crime"};
const std::vector<std::string> kWords = {"river", "empire", "night", "garden", "storm", "letter", "machine", "island",
                                         "ghost", "summer", "city", "dream", "wolf", "mirror", "ocean", "fire"};

ItemProfile random_item(Rng& rng, const std::string& id) {
  ItemProfile it;
  it.id = id;
  const auto n = rng.integer(1, 4);
  for (std::int64_t i = 0; i < n; ++i) {
    if (i) it.title += " ";
    it.title += kWords[rng.integer(0, kWords.size() - 1)];
  }
  it.features = {{"genre", {kGenres[rng.integer(0, kGenres.size() - 1)]}}, {"year", {std::to_string(rng.integer(1950, 2020))}}};
  return it;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("render_description") {
  ItemProfile t2{"589", "Terminator 2: Judgment Day", {{"genre", {"Action"}}, {"year", {"1991"}}}};
  CHECK(render_description(t2) == "The title is Terminator 2: Judgment Day. The genre is Action. The year is 1991.");
  CHECK(render_description(t2) == render_description(t2));
  CHECK(render_description({"1", "Heat", {}}) == "The title is Heat.");
  CHECK(render_description({"1", "Heat", {{"genre", {"Action", "Crime"}}}}) ==
        "The title is Heat. The genre is Action, Crime.");
  ItemProfile other = t2;
  other.features[1].values[0] = "1992";
  CHECK(render_description(other) != render_description(t2));
}

TEST_CASE("text_tokens") {
  CHECK(text_tokens("The title is Heat.") == std::vector<std::string>{"the", "title", "is", "heat"});
  CHECK(text_tokens("T2: 1991!") == std::vector<std::string>{"t2", "1991"});
  CHECK(text_tokens(" ,. ").empty());
  CHECK(text_tokens("Caf\xC3\xA9 au lait") == std::vector<std::string>{"caf\xC3\xA9", "au", "lait"});
}

TEST_CASE("embed_text") {
  const auto v = embed_text("The title is Heat. The genre is Action.", 256);
  CHECK(v.size() == 256);
  CHECK(dot(v, v) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(embed_text("The title is Heat. The genre is Action.", 256) == v);
  CHECK(embed_text("the TITLE is heat the genre is action", 256) == v);
  CHECK(embed_text("The title is Heat. The genre is Action.", 256, 7) != v);
  CHECK_THROWS_AS(embed_text("", 256), DomainError);
  CHECK_THROWS_AS(embed_text("?!", 256), DomainError);
  CHECK_THROWS_AS(embed_text("heat", 15), DomainError);
  CHECK(embed_text("heat", 16).size() == 16);

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto e = embed_text(render_description(random_item(rng, "x")), 256);
    double n = 0;
    for (double x : e) n += x * x;
    REQUIRE(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("shared field values raise similarity") {
  // Oracle: pairs that share genre and year share more tokens than pairs that
  // differ everywhere, so their hashed embeddings are closer on average.
  Rng rng(11);
  double shared_sum = 0, disjoint_sum = 0;
  int shared_wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_item(rng, "a");
    auto b = random_item(rng, "b");
    a.title = kWords[trial % 8];
    b.title = kWords[8 + trial % 8];
    b.features[0].values[0] = a.features[0].values[0];
    b.features[1].values[0] = a.features[1].values[0];
    auto c = b;
    c.features[0].values[0] = kGenres[(std::find(kGenres.begin(), kGenres.end(), a.features[0].values[0]) - kGenres.begin() + 1) % kGenres.size()];
    c.features[1].values[0] = std::to_string(std::stoi(a.features[1].values[0]) + 100);
    const auto ea = embed_text(render_description(a), 256);
    const double s_shared = dot(ea, embed_text(render_description(b), 256));
    const double s_disjoint = std::fabs(dot(ea, embed_text(render_description(c), 256)));
    shared_sum += s_shared;
    disjoint_sum += s_disjoint;
    if (s_shared > s_disjoint) ++shared_wins;
  }
  CHECK(shared_sum / 100 > disjoint_sum / 100);
  CHECK(shared_wins >= 95);
}

TEST_CASE("build_kb and persistence") {
  CHECK(build_kb({}).size() == 0);

  data::SynthConfig cfg;
  cfg.n_users = 2;
  cfg.n_items = 3706;
  const auto ds = data::synth_generate(cfg);
  const auto kb = build_kb(ds.data.catalog.items, 64);
  CHECK(kb.size() == 3706);
  for (const auto& item : ds.data.catalog.items) REQUIRE(kb.contains(item->id));

  auto dup = ds.data.catalog.items;
  dup.push_back(dup.front());
  CHECK_THROWS_AS(build_kb(dup, 64), ConstructionError);

  const auto path = (fs::temp_directory_path() / "elcorec_test_kb.bin").string();
  kb.save(path);
  const auto back = KnowledgeBase::load(path);
  REQUIRE(back.size() == kb.size());
  CHECK(back.dim() == 64);
  for (const auto& id : kb.ids()) {
    const auto a = kb.vector(id), b = back.vector(id);
    REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    CHECK(kb.description(id) == back.description(id));
  }

  const auto empty_path = (fs::temp_directory_path() / "elcorec_test_kb_empty.bin").string();
  build_kb({}, 32).save(empty_path);
  CHECK(KnowledgeBase::load(empty_path).size() == 0);

  nn::Checkpoint foreign;
  foreign.add("w", {1}, {1.0});
  nn::write_checkpoint(empty_path, foreign);
  CHECK_THROWS_AS(KnowledgeBase::load(empty_path), FormatError);
}

TEST_CASE("retrieve_topk basics") {
  Rng rng(2);
  std::vector<data::ItemPtr> items;
  for (int i = 0; i < 20; ++i) items.push_back(std::make_shared<ItemProfile>(random_item(rng, "i" + std::to_string(i))));
  const auto kb = build_kb(items, 128);
  std::vector<std::string> hist = {"i1", "i2", "i3"};

  auto r = retrieve_topk(kb, "i0", hist, 15);
  CHECK(r.size() == 3);
  std::set<std::string> got;
  for (const auto& x : r) got.insert(x.item_id);
  CHECK(got == std::set<std::string>(hist.begin(), hist.end()));
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].similarity >= r[i].similarity);

  hist = {"i4", "i0", "i5"};
  r = retrieve_topk(kb, "i0", hist, 2);
  CHECK(r.front().item_id == "i0");
  CHECK(r.front().position == 1);
  CHECK(r.front().similarity == doctest::Approx(1.0).epsilon(1e-9));

  // Identical similarity: the later entry wins.
  hist = {"i7", "i3", "i7"};
  r = retrieve_topk(kb, "i0", hist, 1);
  if (r.front().item_id == "i7") CHECK(r.front().position == 2);
  r = retrieve_topk(kb, "i7", hist, 1);
  CHECK(r.front().position == 2);

  try {
    retrieve_topk(kb, "i0", {"i1", "ghost"}, 1);
    FAIL("expected lookup error");
  } catch (const LookupError& e) {
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
  CHECK_THROWS_AS(retrieve_topk(kb, "i0", hist, 0), InvalidArgumentError);
}

TEST_CASE("retrieve_topk equals an exhaustive scan") {
  Rng rng(17);
  std::vector<data::ItemPtr> items;
  for (int i = 0; i < 300; ++i) items.push_back(std::make_shared<ItemProfile>(random_item(rng, std::to_string(i))));
  const auto kb = build_kb(items, 256);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto target = std::to_string(rng.integer(0, 299));
    std::vector<std::string> hist(50);
    for (auto& h : hist) h = std::to_string(rng.integer(0, 299));
    const std::size_t k = 15;

    // Oracle: cosine from raw vectors on the same 1e-9 grid, full sort, take K.
    std::vector<std::pair<long long, std::size_t>> scored;
    const auto t = kb.vector(target);
    for (std::size_t i = 0; i < hist.size(); ++i) {
      const auto v = kb.vector(hist[i]);
      scored.push_back({std::llround(1e9 * dot(t, v) / std::sqrt(dot(t, t) * dot(v, v))), i});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second > b.second;
    });
    std::set<std::size_t> oracle;
    for (std::size_t i = 0; i < k; ++i) oracle.insert(scored[i].second);

    std::set<std::size_t> got;
    for (const auto& r : retrieve_topk(kb, target, hist, k)) got.insert(r.position);
    REQUIRE(got == oracle);
  }
}
