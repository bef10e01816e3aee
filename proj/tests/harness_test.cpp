#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "potrl/error.hpp"
#include "potrl/harness.hpp"

using namespace potrl;
namespace fs = std::filesystem;

namespace {

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void Spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// A run small enough for a unit test: same pipeline, tiny budgets.
RunConfig TinyRun(const fs::path& out) {
  RunConfig c;
  c.episode.steps_per_episode = 6;
  c.episode.episodes = 2;
  c.episode.sim.particle_count = 20;
  c.episode.sim.pour.ramp_seconds = 0.3;
  c.episode.sim.pour.settle_seconds = 0.1;
  c.episode.sim.shake.duration_seconds = 0.4;
  c.ppo.total_steps = 12;
  c.ppo.rollout_length = 4;
  c.ppo.minibatch_size = 2;
  c.ppo.update_epochs = 2;
  c.network.hidden = {8, 4};
  c.output_dir = out;
  return c;
}

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("potrl_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int Cli(const std::vector<std::string>& args, std::string* out = nullptr,
        std::string* err = nullptr) {
  std::vector<const char*> argv{"potrl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

std::vector<RewardRow> Rows(int episodes, int per_episode) {
  std::vector<RewardRow> rows;
  for (int e = 1; e <= episodes; ++e) {
    for (int s = 1; s <= per_episode; ++s) {
      RewardRow r;
      r.step = static_cast<long>(rows.size()) + 1;
      r.episode = e;
      r.reward = 0.5 + 0.4 * std::sin(0.01 * static_cast<double>(r.step));
      rows.push_back(r);
    }
  }
  return rows;
}

int Count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("config text round trips") {
  RunConfig c = TinyRun("somewhere");
  c.env = EnvKind::Hybrid(0.3);
  c.seed = 99;
  c.episode.seed_policy = SeedPolicy::kPerEpisode;
  const std::string text = ConfigText(c);
  CHECK(ConfigText(ParseConfig(text)) == text);
  CHECK(ConfigText(ParseConfig("{}")) == ConfigText(RunConfig{}));
  // the constants that define the design space are written out
  for (const char* key : {"\"rings\"", "\"ring_resolution\"", "\"max_tilt_deg\"", "\"amplitude_deg\"",
                          "\"learning_rate\"", "\"steps_per_episode\""}) {
    CHECK(text.find(key) != std::string::npos);
  }
}

TEST_CASE("config errors name the field") {
  CHECK_THROWS_WITH_AS(ParseConfig(R"({"env": {"knd": "pour"}})"), doctest::Contains("env.knd"),
                       InvalidConfigError);
  CHECK_THROWS_WITH_AS(ParseConfig(R"({"sim": {"dt": "fast"}})"), doctest::Contains("sim.dt"),
                       InvalidConfigError);
  CHECK_THROWS_WITH_AS(ParseConfig(R"({"geometry": {"rings": 12}})"),
                       doctest::Contains("geometry.rings"), InvalidConfigError);
  CHECK_THROWS_WITH_AS(ParseConfig(R"({"ppo": {"total_steps": 999}})"),
                       doctest::Contains("total_steps"), InvalidConfigError);
  CHECK_THROWS_AS(ParseConfig("{"), Error);
  CHECK_THROWS_AS(LoadConfig("/nonexistent/config.json"), IoError);
}

TEST_CASE("overrides edit one dotted field") {
  RunConfig c;
  ApplyOverride(c, "sim.shake.amplitude_deg=0");
  CHECK(c.episode.sim.shake.amplitude_deg == 0.0);
  ApplyOverride(c, "env.kind=hybrid");
  ApplyOverride(c, "env.weight=0.25");
  CHECK(c.env.task == TaskKind::kHybrid);
  CHECK(c.env.weight == 0.25);
  ApplyOverride(c, "checkpoints=latest");
  CHECK(c.checkpoints == CheckpointPolicy::kLatest);
  CHECK_THROWS_WITH_AS(ApplyOverride(c, "sim.bogus=1"), doctest::Contains("sim.bogus"),
                       InvalidConfigError);
  CHECK_THROWS_AS(ApplyOverride(c, "novalue"), InvalidConfigError);
  CHECK_THROWS_AS(ApplyOverride(c, "env.weight=3"), InvalidConfigError);
}

TEST_CASE("shape files") {
  RingArray scales{};
  for (std::size_t i = 0; i < scales.size(); ++i) scales[i] = 0.5 + 0.1 * static_cast<double>(i);
  const PotShape shape = PotShape().WithScales(scales);
  CHECK(ParseShape(ShapeText(shape)) == shape);
  CHECK_THROWS_WITH_AS(ParseShape(R"({"base_radius": 1, "height": 2, "radius_scales": [1, 1]})"),
                       doctest::Contains("radius_scales"), ParseError);
  CHECK_THROWS_WITH_AS(ParseShape(R"({"base_radius": "big", "radius_scales": [1,1,1,1,1,1,1,1,1,1,1]})"),
                       doctest::Contains("base_radius"), ParseError);
  CHECK_THROWS_WITH_AS(
      ParseShape(R"({"base_radius": 1, "height": 2, "radius_scales": [1,1,1,1,1,1,1,1,1,1,1.7]})"),
      doctest::Contains("radius_scales"), InvalidShapeError);
}

TEST_CASE("reward CSV parsing") {
  const std::string text = std::string(kRewardCsvHeader) +
                            "\n1,1,0.25,0.25,,50,100,50\n2,1,0.5,0.4,0.65,80,90,30\n";
  const auto rows = ParseRewardCsv(text);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].pour_reward == 0.25);
  CHECK_FALSE(rows[0].shake_reward.has_value());
  CHECK(rows[1].shake_reward == 0.65);
  CHECK(rows[1].n_spilled == 30);
  CHECK_THROWS_WITH_AS(ParseRewardCsv(std::string(kRewardCsvHeader) + "\n1,1,x,,,0,0,0\n"),
                       doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_AS(ParseRewardCsv("step,reward\n"), ParseError);
}

TEST_CASE("reward plot marks episode boundaries and the best step") {
  const auto rows = Rows(5, 200);
  const std::string svg = RenderRewardPlot(rows, "pour reward");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(Count(svg, "class=\"episode-boundary\"") == 4);
  for (int s : {201, 401, 601, 801}) {
    CHECK(svg.find("data-step=\"" + std::to_string(s) + "\"") != std::string::npos);
  }
  CHECK(Count(svg, "<polyline class=\"reward\"") == 1);
  const auto start = svg.find("points=\"") + 8;
  const std::string points = svg.substr(start, svg.find('"', start) - start);
  CHECK(Count(points, ",") == 1000);
  CHECK(Count(svg, "class=\"best-step\"") == 1);
  CHECK(svg.find("pour reward") != std::string::npos);
  CHECK(RenderRewardPlot(rows, "pour reward") == svg);

  const std::string one = RenderRewardPlot(Rows(1, 1));
  CHECK(Count(one, "class=\"episode-boundary\"") == 0);
  CHECK(one.find("nan") == std::string::npos);
  CHECK_THROWS_AS(RenderRewardPlot({}), UsageError);
}

TEST_CASE("sweep CSV, table and consistency") {
  SweepResult r;
  r.rows.push_back({0.5, 5, 51, 0.48, 0.80, 0.64, ""});
  r.rows.push_back({0.9, 0, 0, 0, 0, 0, "boom"});
  const auto back = ParseSweepCsv(SweepCsv(r));
  REQUIRE(back.size() == 2);
  CHECK(back[0].pour == 0.48);
  CHECK(back[0].step == 51);
  CHECK(back[1].error == "boom");
  CHECK(SweepRowConsistent(back[0], 0.005));
  SweepRow bad = back[0];
  bad.hybrid = 0.7;
  CHECK_FALSE(SweepRowConsistent(bad, 0.005));

  const std::string table = SweepTable(r, 2);
  CHECK(table.find("Weight") != std::string::npos);
  CHECK(table.find("0.48") != std::string::npos);
  CHECK(table.find("failed: boom") != std::string::npos);
}

TEST_CASE("reference sweep rows are internally consistent") {
  const auto rows = ParseSweepCsv(Slurp(fs::path(POTRL_TEST_DATA) / "reference_sweep.csv"));
  REQUIRE(rows.size() == 5);
  for (const SweepRow& row : rows) CHECK(SweepRowConsistent(row, 0.005));
  CHECK(rows[2].hybrid == 0.64);
  // a deliberately broken copy is caught
  SweepRow broken = rows[2];
  broken.hybrid = 0.66;
  CHECK_FALSE(SweepRowConsistent(broken, 0.005));
}

TEST_CASE("spearman correlation") {
  CHECK(SpearmanCorrelation({1, 2, 3, 4}, {10, 20, 25, 100}) == doctest::Approx(1.0));
  CHECK(SpearmanCorrelation({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // tied ranks 1.5, 1.5, 3, 4 against 1, 2, 3, 4
  CHECK(SpearmanCorrelation({1, 2, 3, 4}, {1, 1, 2, 3}) ==
        doctest::Approx(4.5 / std::sqrt(22.5)).epsilon(1e-12));
  CHECK_THROWS_AS(SpearmanCorrelation({1}, {1}), UsageError);
  CHECK_THROWS(SpearmanCorrelation({1, 2, 3}, {1, 1, 1}));
}

TEST_CASE("a training run writes every artifact") {
  const fs::path dir = Scratch("train");
  RunConfig c = TinyRun(dir / "run");
  c.env = EnvKind::Hybrid(0.4);
  const TrainResult result = RunTraining(c);
  for (const char* f : {"config.json", "rewards.csv", "updates.csv", "best_design.obj",
                        "best_design.json", "reward_plot.svg", "summary.json",
                        "checkpoints/episode_1.json", "checkpoints/episode_2.json"}) {
    CHECK_MESSAGE(fs::exists(dir / "run" / f), f);
  }
  const auto rows = ReadRewardCsv(dir / "run" / "rewards.csv");
  REQUIRE(rows.size() == 12);
  CHECK(rows[5].episode == 1);
  CHECK(rows[6].episode == 2);
  for (const RewardRow& r : rows) {
    REQUIRE(r.pour_reward.has_value());
    REQUIRE(r.shake_reward.has_value());
    CHECK(std::abs(r.reward - (0.4 * *r.pour_reward + 0.6 * *r.shake_reward)) < 1e-12);
    CHECK(r.n_cup + r.n_pot + r.n_spilled == 20);
  }
  CHECK(result.summary.best_reward == result.history.best_step().reward);
  CHECK(ParseConfig(Slurp(dir / "run" / "config.json")).seed == c.seed);
  const PotShape best = LoadShape(dir / "run" / "best_design.json");
  for (std::size_t i = 0; i < kRingCount; ++i) {
    CHECK(best.radius_scales()[i] ==
          result.history.best_step().design[static_cast<Eigen::Index>(i)]);
  }
  CHECK(LoadCheckpoint(dir / "run" / "checkpoints" / "episode_2.json").AllFinite());
  fs::remove_all(dir);
}

TEST_CASE("latest-only checkpoints keep one file") {
  const fs::path dir = Scratch("latest");
  RunConfig c = TinyRun(dir / "run");
  c.checkpoints = CheckpointPolicy::kLatest;
  RunTraining(c);
  CHECK_FALSE(fs::exists(dir / "run" / "checkpoints" / "episode_1.json"));
  CHECK(fs::exists(dir / "run" / "checkpoints" / "episode_2.json"));
  fs::remove_all(dir);
}

TEST_CASE("a sweep writes one consistent row per weight") {
  const fs::path dir = Scratch("sweep");
  RunConfig c = TinyRun(dir / "sweep");
  c.sweep_weights = {0.2, 0.8};
  const SweepResult r = RunSweep(c);
  REQUIRE(r.rows.size() == 2);
  for (const SweepRow& row : r.rows) {
    CHECK(row.ok());
    CHECK(SweepRowConsistent(row, 1e-12));
  }
  CHECK(fs::exists(dir / "sweep" / "w_0.2" / "summary.json"));
  CHECK(ParseSweepCsv(Slurp(dir / "sweep" / "sweep.csv")).size() == 2);
  std::string out;
  CHECK(Cli({"check-sweep", (dir / "sweep" / "sweep.csv").string()}, &out) == 0);
  CHECK(Count(out, "consistent") == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: bad config leaves no outputs") {
  const fs::path dir = Scratch("cli_bad");
  std::string err;
  CHECK(Cli({"train", "--config", (dir / "missing.json").string(), "--out",
             (dir / "out").string()},
            nullptr, &err) == 1);
  CHECK(err.rfind("error: ", 0) == 0);
  CHECK_FALSE(fs::exists(dir / "out"));

  Spit(dir / "bad.json", R"({"env": {"kind": "pour", "colour": 3}})");
  CHECK(Cli({"train", "--config", (dir / "bad.json").string(), "--out", (dir / "out").string()},
            nullptr, &err) == 1);
  CHECK(err.find("env.colour") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(Cli({"train", "--w", "1.5", "--out", (dir / "out").string()}) == 1);
  CHECK_FALSE(fs::exists(dir / "out"));
  fs::remove_all(dir);
}

TEST_CASE("cli: simulate reports a consistent partition") {
  const fs::path dir = Scratch("cli_sim");
  Spit(dir / "config.json", ConfigText(TinyRun(dir)));
  std::string out;
  REQUIRE(Cli({"simulate", "--config", (dir / "config.json").string(), "--task", "pour",
               "--seed", "4", "--dump-particles", (dir / "dump.csv").string()},
              &out) == 0);
  std::smatch m;
  auto field = [&](const std::string& name) {
    REQUIRE(std::regex_search(out, m, std::regex(name + " ([0-9.e-]+)")));
    return std::stod(m[1]);
  };
  const double total = field("n_total"), cup = field("n_cup"), pot = field("n_pot"),
               spilled = field("n_spilled");
  CHECK(total == 20);
  CHECK(cup + pot + spilled == total);
  CHECK(field("reward") == doctest::Approx(cup / total));
  CHECK(Slurp(dir / "dump.csv").rfind("frame,particle,x,y,z\n", 0) == 0);

  std::string again;
  Cli({"simulate", "--config", (dir / "config.json").string(), "--task", "pour", "--seed", "4"},
      &again);
  CHECK(again == out);
  CHECK(Cli({"simulate", "--task", "stir"}) != 0);
  fs::remove_all(dir);
}

TEST_CASE("cli: export-mesh and plot") {
  const fs::path dir = Scratch("cli_mesh");
  RingArray scales{};
  scales.fill(1.2);
  Spit(dir / "shape.json", ShapeText(PotShape().WithScales(scales)));
  CHECK(Cli({"export-mesh", "--shape", (dir / "shape.json").string(), "--out",
             (dir / "pot.obj").string()}) == 0);
  CHECK(Slurp(dir / "pot.obj") == ObjText(BuildPointCloud(PotShape().WithScales(scales))));

  std::string csv = std::string(kRewardCsvHeader) + "\n";
  for (int s = 1; s <= 10; ++s) {
    csv += std::to_string(s) + "," + (s <= 5 ? "1" : "2") + ",0.5,0.5,,1,1,0\n";
  }
  Spit(dir / "rewards.csv", csv);
  CHECK(Cli({"plot", (dir / "rewards.csv").string(), "--out", (dir / "plot.svg").string()}) == 0);
  CHECK(Count(Slurp(dir / "plot.svg"), "class=\"episode-boundary\"") == 1);
  Spit(dir / "empty.csv", std::string(kRewardCsvHeader) + "\n");
  CHECK(Cli({"plot", (dir / "empty.csv").string(), "--out", (dir / "e.svg").string()}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: identical runs produce identical files") {
  const fs::path dir = Scratch("cli_det");
  Spit(dir / "config.json", ConfigText(TinyRun(dir)));
  for (const char* run : {"a", "b"}) {
    REQUIRE(Cli({"train", "--config", (dir / "config.json").string(), "--env", "shake", "--seed",
                 "3", "--out", (dir / run).string()}) == 0);
  }
  for (const char* f : {"rewards.csv", "updates.csv", "checkpoints/episode_2.json",
                        "summary.json", "reward_plot.svg"}) {
    CHECK_MESSAGE(Slurp(dir / "a" / f) == Slurp(dir / "b" / f), f);
  }
  fs::remove_all(dir);
}
