#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "common/error.hpp"
#include "harness/experiment.hpp"
#include "harness/report_io.hpp"

using namespace elcorec;
using namespace elcorec::harness;
namespace fs = std::filesystem;

namespace {

nlohmann::json smoke_json() {
  std::ifstream in(std::string(ELCOREC_SOURCE_DIR) + "/config/experiments/smoke.json");
  return nlohmann::json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("scores round trip and validation") {
  const auto dir = fresh_dir("elcorec_scores");
  fs::create_directories(dir);
  const auto path = (dir / "scores.jsonl").string();
  write_scores(path, {{"a", 0.25, 1}, {"b", 1.0, 0}});
  const auto rows = read_scores(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].id == "a");
  CHECK(rows[0].p_click == 0.25);
  CHECK(rows[1].label == 0);

  std::ofstream(dir / "bad1.jsonl") << "{\"id\":\"a\",\"p_click\":1.5,\"label\":1}\n";
  CHECK_THROWS_AS(read_scores((dir / "bad1.jsonl").string()), FormatError);
  std::ofstream(dir / "bad2.jsonl") << "{\"id\":\"a\",\"p_click\":0.5,\"label\":2}\n";
  CHECK_THROWS_AS(read_scores((dir / "bad2.jsonl").string()), FormatError);
  std::ofstream(dir / "bad3.jsonl") << "{\"id\":\"a\"\n";
  CHECK_THROWS_AS(read_scores((dir / "bad3.jsonl").string()), FormatError);
  CHECK_THROWS_AS(read_scores((dir / "missing.jsonl").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0}) == 2.5);
  CHECK_THROWS_AS(median({}), InvalidArgumentError);
}

TEST_CASE("experiment config") {
  auto j = smoke_json();
  const auto c = ExperimentConfig::from_json(j);
  CHECK(c.lm.d_gat == c.gat.d);
  CHECK(ExperimentConfig::from_json(c.to_json()).to_json() == c.to_json());

  auto bad = j;
  bad["modes"] = "rap";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), FormatError);
  bad = j;
  bad["mode"] = "fancy";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), InvalidArgumentError);
  bad = j;
  bad["mode"] = "plain";
  bad["lm"]["inject"] = true;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), InvalidArgumentError);
  bad["lm"].erase("inject");
  CHECK_FALSE(ExperimentConfig::from_json(bad).lm.inject);
  bad = j;
  bad["lm"]["d_gat"] = 7;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), InvalidArgumentError);
  bad = j;
  bad["dataset"] = {{"kind", "files"}, {"interactions", "/no/such/file"}, {"schema", "/no/such/schema"}};
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), InvalidArgumentError);

  // every shipped experiment config parses
  for (const auto& e : fs::directory_iterator(std::string(ELCOREC_SOURCE_DIR) + "/config/experiments")) {
    INFO(e.path());
    if (e.path().filename() == "ml100k_gat.json" && !fs::exists("/root/data/ml-100k/ml-100k.inter")) continue;
    CHECK_NOTHROW(ExperimentConfig::load(e.path().string()));
  }
}

TEST_CASE("identical config and seed give identical metrics.json") {
  auto c = ExperimentConfig::from_json(smoke_json());
  const auto a = fresh_dir("elcorec_repro_a"), b = fresh_dir("elcorec_repro_b");
  c.output_dir = a.string();
  const auto ra = run_experiment(c);
  c.output_dir = b.string();
  const auto rb = run_experiment(c);
  for (const char* f : {"metrics.json", "scores.jsonl", "gat_report.json", "prompts_train.jsonl", "prompts_test.jsonl"}) {
    INFO(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  for (const char* f : {"gat.ckpt", "kb.bin", "llm.ckpt", "timing.json"}) CHECK(fs::exists(a / f));
  CHECK(ra.n_test == read_scores((a / "scores.jsonl").string()).size());
  CHECK(ra.lm_steps > 0);
  CHECK(ra.auc >= 0.0);
  CHECK(ra.auc <= 1.0);

  // metrics.json carries no timing
  const auto m = read_json((a / "metrics.json").string());
  CHECK_FALSE(m.contains("timing"));
  CHECK(m.at("auc").get<double>() == ra.auc);

  // a different seed changes the model
  c.seed = 1;
  c.output_dir.clear();
  CHECK(run_experiment(c).auc != ra.auc);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("stage failures name the stage") {
  auto j = smoke_json();
  j["k_ret"] = 0;
  j["k_rec"] = 0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), InvalidArgumentError);
  j = smoke_json();
  j["lm"]["max_len"] = 12;  // prompts can never fit
  const auto c = ExperimentConfig::from_json(j);
  try {
    run_experiment(c);
    FAIL("expected a StageError");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("train-llm") != std::string::npos);
  }
}
