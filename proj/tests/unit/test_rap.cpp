#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "kb/knowledge_base.hpp"
#include "lm/tokenizer.hpp"
#include "rap/rap_builder.hpp"

using namespace elcorec;
using namespace elcorec::rap;
using data::HistoryEntry;
using data::ItemProfile;
using data::Sample;
namespace fs = std::filesystem;

namespace {

struct World {
  std::vector<data::ItemPtr> items;
  kb::KnowledgeBase kb;
};

World make_world(std::size_t n_items) {
  const char* genres[] = {"Action", "Comedy", "Drama", "Horror"};
  World w;
  for (std::size_t i = 0; i < n_items; ++i) {
    w.items.push_back(std::make_shared<ItemProfile>(ItemProfile{
        "m" + std::to_string(i), "Movie " + std::to_string(i), {{"genre", {genres[i % 4]}}, {"year", {std::to_string(1980 + i % 30)}}}}));
  }
  w.kb = kb::build_kb(w.items, 64);
  return w;
}

Sample make_sample(const World& w, std::size_t history_len, int label, std::uint64_t seed = 1) {
  Rng rng(seed);
  Sample s;
  s.id = "u1:" + std::to_string(history_len);
  s.user = std::make_shared<data::UserProfile>(data::UserProfile{"u1", {{"age", {"25-34"}}, {"occupation", {"writer"}}}});
  s.target = w.items[rng.integer(0, w.items.size() - 1)];
  std::vector<HistoryEntry> h;
  for (std::size_t k = 0; k < history_len; ++k)
    h.push_back({w.items[rng.integer(0, w.items.size() - 1)], static_cast<int>(rng.integer(1, 5)), static_cast<std::int64_t>(100 + k)});
  s.history = data::HistoryView(std::move(h));
  s.target_ts = 1000;
  s.label = label;
  s.rating = label ? 5 : 2;
  return s;
}

std::size_t count_kind(const RapPrompt& p, SegmentKind k) {
  return static_cast<std::size_t>(std::count_if(p.segments.begin(), p.segments.end(), [&](const Segment& s) { return s.kind == k; }));
}

std::size_t placeholder_count(const std::string& text) {
  const auto w = lm::split_words(text);
  return static_cast<std::size_t>(std::count(w.begin(), w.end(), std::string(lm::kExpert)));
}

}  // namespace

TEST_CASE("split_words") {
  CHECK(lm::split_words("Heat (rated 4/5)") == std::vector<std::string>{"Heat", "(", "rated", "4", "/", "5", ")"});
  CHECK(lm::split_words("signal: <ExpertEmb>.") == std::vector<std::string>{"signal", ":", "<ExpertEmb>", "."});
  CHECK(lm::split_words("a<b") == std::vector<std::string>{"a", "<", "b"});
  CHECK(lm::split_words("  \n ").empty());
  CHECK(lm::split_words("user's") == std::vector<std::string>{"user", "'", "s"});
}

TEST_CASE("tokenizer") {
  const std::vector<std::string> corpus = {"b a a c", "a b", "Yes No zebra"};
  const auto t = lm::Tokenizer::build(corpus);
  CHECK(t.id("<pad>") == lm::Tokenizer::kPadId);
  CHECK(t.id("<bos>") == lm::Tokenizer::kBosId);
  CHECK(t.id("<eos>") == lm::Tokenizer::kEosId);
  CHECK(t.id("<unk>") == lm::Tokenizer::kUnkId);
  CHECK(t.id("<ExpertEmb>") == lm::Tokenizer::kExpertId);
  CHECK(t.id("Yes") == lm::Tokenizer::kYesId);
  CHECK(t.id("No") == lm::Tokenizer::kNoId);
  // a:3, b:2, c:1, zebra:1 -> frequency then lexicographic.
  CHECK(t.token(7) == "a");
  CHECK(t.token(8) == "b");
  CHECK(t.token(9) == "c");
  CHECK(t.token(10) == "zebra");
  CHECK(t.size() == 11);
  CHECK(t.encode("Yes").size() == 1);
  CHECK(t.encode("a q") == std::vector<std::size_t>{7, lm::Tokenizer::kUnkId});
  CHECK(lm::Tokenizer::build(corpus).tokens() == t.tokens());

  const auto back = lm::Tokenizer::from_json(nlohmann::json::parse(t.to_json().dump()));
  CHECK(back.tokens() == t.tokens());
  CHECK_THROWS_AS(lm::Tokenizer::from_json(nlohmann::json::parse("[\"a\"]")), FormatError);

  const auto limited = lm::Tokenizer::build(corpus, 2);
  CHECK(limited.size() == 9);
}

TEST_CASE("tokenizer round-trips a prompt modulo whitespace") {
  const auto w = make_world(30);
  const auto p = build_rap_prompt(make_sample(w, 12, 1), w.kb, {5, 5, true});
  const auto t = lm::Tokenizer::build({p.text});
  const auto ids = t.encode(p.text);
  CHECK(std::find(ids.begin(), ids.end(), lm::Tokenizer::kUnkId) == ids.end());
  CHECK(lm::split_words(t.decode(ids)) == lm::split_words(p.text));
  CHECK(t.decode(t.encode(t.decode(ids))) == t.decode(ids));
}

TEST_CASE("template defaults come from the shipped config file") {
  const auto file = RapTemplate::load(std::string(ELCOREC_SOURCE_DIR) + "/config/rap_template.json");
  CHECK(file.to_json() == RapTemplate::defaults().to_json());
  auto j = RapTemplate::defaults().to_json();
  j["placeholder"] = "no slot here";
  CHECK_THROWS_AS(RapTemplate::from_json(j), FormatError);
  j = RapTemplate::defaults().to_json();
  j["question"] = "<ExpertEmb> twice?";
  CHECK_THROWS_AS(RapTemplate::from_json(j), FormatError);
}

TEST_CASE("rap prompt bytes are pinned") {
  auto i1 = std::make_shared<ItemProfile>(ItemProfile{"1", "Heat", {{"genre", {"Action"}}}});
  auto i2 = std::make_shared<ItemProfile>(ItemProfile{"2", "Toy Story", {{"genre", {"Animation"}}}});
  auto t = std::make_shared<ItemProfile>(ItemProfile{"3", "Terminator 2: Judgment Day", {{"genre", {"Action"}}}});
  const auto kb = kb::build_kb({i1, i2, t}, 64);
  Sample s;
  s.id = "7:2";
  s.user = std::make_shared<data::UserProfile>(data::UserProfile{"7", {{"age", {"25"}}, {"gender", {"F"}}}});
  s.target = t;
  s.target_ts = 50;
  s.label = 1;
  s.history = data::HistoryView(std::vector<HistoryEntry>{{i1, 5, 10}, {i2, 2, 20}});
  const auto p = build_rap_prompt(s, kb, {1, 1, true});
  CHECK(p.text ==
        "The user has the profile: age 25, gender F.\n"
        "Items from the user's history that are most similar to the target item:\n"
        "Heat (rated 5/5)\n"
        "Items the user interacted with most recently:\n"
        "Toy Story (rated 2/5)\n"
        "Overall preference signal: <ExpertEmb>.\n"
        "Will the user like Terminator 2: Judgment Day? Answer Yes or No.");
  CHECK(p.answer == "Yes");
  CHECK(p.retrieved_ids == std::vector<std::string>{"1"});
  CHECK(p.recent_ids == std::vector<std::string>{"2"});
  const auto words = lm::split_words(p.text);
  REQUIRE(p.placeholder_index >= 0);
  CHECK(words[static_cast<std::size_t>(p.placeholder_index)] == "<ExpertEmb>");

  const auto plain = build_plain_prompt(s, kb, 30, false);
  CHECK(plain.text ==
        "The user has the profile: age 25, gender F.\n"
        "Items from the user's history that are relevant to the target item:\n"
        "Heat\n"
        "Toy Story\n"
        "Will the user like Terminator 2: Judgment Day? Answer Yes or No.");
  CHECK(plain.placeholder_index == -1);
}

TEST_CASE("rap prompt structure") {
  const auto w = make_world(120);

  SUBCASE("history 40, K 15/15") {
    const auto s = make_sample(w, 40, 1);
    const auto p = build_rap_prompt(s, w.kb, {15, 15, true});
    CHECK(count_kind(p, SegmentKind::RetrievedLine) == 15);
    CHECK(count_kind(p, SegmentKind::RecentLine) == 15);
    CHECK(count_kind(p, SegmentKind::Placeholder) == 1);
    CHECK(placeholder_count(p.text) == 1);
    CHECK(p.answer == "Yes");
    CHECK(p.mode == "rap");

    std::vector<std::string> hist;
    for (const auto& e : s.history) hist.push_back(e.item->id);
    std::multiset<std::string> expect_ret, got_ret(p.retrieved_ids.begin(), p.retrieved_ids.end());
    std::vector<std::size_t> positions;
    for (const auto& r : kb::retrieve_topk(w.kb, s.target->id, hist, 15)) {
      expect_ret.insert(r.item_id);
      positions.push_back(r.position);
    }
    CHECK(got_ret == expect_ret);
    std::sort(positions.begin(), positions.end());
    for (std::size_t i = 0; i < positions.size(); ++i) CHECK(p.retrieved_ids[i] == hist[positions[i]]);
    CHECK(p.recent_ids == std::vector<std::string>(hist.end() - 15, hist.end()));

    const auto words = lm::split_words(p.text);
    CHECK(words[static_cast<std::size_t>(p.placeholder_index)] == "<ExpertEmb>");
    // Placeholder sits after both sections and right before the question.
    CHECK(p.segments[p.segments.size() - 2].kind == SegmentKind::Placeholder);
    CHECK(p.segments.back().kind == SegmentKind::Question);
    CHECK(build_rap_prompt(s, w.kb, {15, 15, true}).text == p.text);
  }
  SUBCASE("short history fills both sections") {
    const auto p = build_rap_prompt(make_sample(w, 3, 0), w.kb, {15, 15, true});
    CHECK(count_kind(p, SegmentKind::RetrievedLine) == 3);
    CHECK(count_kind(p, SegmentKind::RecentLine) == 3);
    CHECK(p.answer == "No");
  }
  SUBCASE("plain prompts") {
    auto p = build_plain_prompt(make_sample(w, 100, 1), w.kb, 30);
    CHECK(count_kind(p, SegmentKind::RetrievedLine) == 30);
    CHECK(placeholder_count(p.text) == 0);
    CHECK(p.placeholder_index == -1);
    p = build_plain_prompt(make_sample(w, 5, 1), w.kb, 30);
    CHECK(count_kind(p, SegmentKind::RetrievedLine) == 5);
  }
  SUBCASE("rating visibility switch") {
    const auto p = build_rap_prompt(make_sample(w, 10, 1), w.kb, {5, 5, false});
    CHECK(p.text.find("rated") == std::string::npos);
  }
  SUBCASE("errors") {
    auto s = make_sample(w, 0, 1);
    CHECK_THROWS_AS(build_rap_prompt(s, w.kb, {15, 15, true}), ConstructionError);
    CHECK_THROWS_AS(build_plain_prompt(s, w.kb, 30), ConstructionError);
    s = make_sample(w, 4, 1);
    s.target = std::make_shared<ItemProfile>(ItemProfile{"ghost", "Ghost", {}});
    CHECK_THROWS_AS(build_rap_prompt(s, w.kb, {15, 15, true}), LookupError);
  }
  SUBCASE("titles cannot forge the placeholder") {
    auto s = make_sample(w, 4, 1);
    s.target = std::make_shared<ItemProfile>(ItemProfile{w.items[0]->id, "Evil <ExpertEmb> Title", {}});
    const auto p = build_rap_prompt(s, w.kb, {15, 15, true});
    CHECK(placeholder_count(p.text) == 1);
  }
}

TEST_CASE("prompt_token_length") {
  const auto t = lm::Tokenizer::build({"Heat (rated 4/5)"});
  CHECK(prompt_token_length("", t) == 0);
  CHECK(prompt_token_length("Yes", t) == 1);
  CHECK(prompt_token_length("Heat (rated 4/5)", t) == 7);
}

TEST_CASE("prompt files round-trip") {
  const auto w = make_world(50);
  std::vector<RapPrompt> prompts;
  for (std::size_t i = 1; i < 8; ++i) prompts.push_back(build_rap_prompt(make_sample(w, 3 * i, static_cast<int>(i % 2), i), w.kb, {4, 4, true}));
  prompts.push_back(build_plain_prompt(make_sample(w, 9, 1, 99), w.kb, 6));
  const auto path = (fs::temp_directory_path() / "elcorec_test_prompts.jsonl").string();
  write_prompts(path, prompts);
  const auto back = read_prompts(path);
  REQUIRE(back.size() == prompts.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].text == prompts[i].text);
    CHECK(back[i].placeholder_index == prompts[i].placeholder_index);
    CHECK(back[i].answer == prompts[i].answer);
    CHECK(back[i].retrieved_ids == prompts[i].retrieved_ids);
    CHECK(back[i].recent_ids == prompts[i].recent_ids);
    CHECK(back[i].sample.history.size() == prompts[i].sample.history.size());
    CHECK(*back[i].sample.target == *prompts[i].sample.target);
  }
}
