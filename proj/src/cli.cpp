#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "potrl/error.hpp"
#include "potrl/format.hpp"
#include "potrl/harness.hpp"

namespace potrl {
namespace {

// Flags shared by the subcommands that build a RunConfig.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> env;
  std::optional<double> weight;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void AddConfigFlags(CLI::App* cmd, ConfigFlags& flags, bool with_env) {
  cmd->add_option("--config", flags.config_path, "run config file (JSON)");
  cmd->add_option("--set", flags.overrides,
                  "override a config field, e.g. --set sim.shake.amplitude_deg=0");
  cmd->add_option("--seed", flags.seed, "run seed");
  if (with_env) {
    cmd->add_option("--env", flags.env, "pour, shake or hybrid")
        ->check(CLI::IsMember({"pour", "shake", "hybrid"}));
    cmd->add_option("--w", flags.weight, "hybrid pour weight in [0, 1]");
  }
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--threads", flags.threads, "worker threads (1 = deterministic single-threaded)");
}

RunConfig ResolveConfig(const ConfigFlags& flags) {
  RunConfig config = flags.config_path.empty() ? RunConfig{} : LoadConfig(flags.config_path);
  for (const std::string& assignment : flags.overrides) ApplyOverride(config, assignment);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.env) config.env.task = ParseTaskKind(*flags.env);
  if (flags.weight) {
    if (!flags.env) config.env.task = TaskKind::kHybrid;
    config.env.weight = *flags.weight;
  }
  if (config.env.task == TaskKind::kHybrid) config.env = EnvKind::Hybrid(config.env.weight);
  if (flags.out) config.output_dir = *flags.out;
  if (flags.threads) config.threads = *flags.threads;
  config.Validate();
  return config;
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pot design by reinforcement learning on a particle water model", "potrl"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "train one design policy and write its artifacts");
  AddConfigFlags(train, train_flags, true);

  ConfigFlags sweep_flags;
  std::vector<double> sweep_weights;
  CLI::App* sweep = app.add_subcommand("sweep", "one hybrid training per weight w");
  AddConfigFlags(sweep, sweep_flags, false);
  sweep->add_option("--weights", sweep_weights, "weights in (0, 1)");

  ConfigFlags sim_flags;
  std::string sim_shape;
  std::string sim_task;
  std::string sim_dump;
  CLI::App* simulate = app.add_subcommand("simulate", "run one pour or shake simulation");
  simulate->add_option("--config", sim_flags.config_path, "run config file (sim and cup blocks are used)");
  simulate->add_option("--set", sim_flags.overrides, "override a config field");
  simulate->add_option("--seed", sim_flags.seed, "particle spawn seed");
  simulate->add_option("--shape", sim_shape, "shape file (JSON); default is the initial cylinder");
  simulate->add_option("--task", sim_task, "pour or shake")
      ->required()
      ->check(CLI::IsMember({"pour", "shake"}));
  simulate->add_option("--dump-particles", sim_dump, "write per-frame particle positions (CSV)");

  std::string mesh_shape;
  std::string mesh_out;
  CLI::App* export_mesh = app.add_subcommand("export-mesh", "write a shape as an OBJ mesh");
  export_mesh->add_option("--shape", mesh_shape, "shape file (JSON); default is the initial cylinder");
  export_mesh->add_option("--out", mesh_out, "OBJ path")->required();

  std::string plot_in;
  std::string plot_out;
  std::string plot_title = "reward";
  CLI::App* plot = app.add_subcommand("plot", "render a reward CSV as an SVG line chart");
  plot->add_option("rewards", plot_in, "reward CSV")->required();
  plot->add_option("--out", plot_out, "SVG path")->required();
  plot->add_option("--title", plot_title, "chart title");

  std::string check_in;
  double check_tolerance = 0.005;
  CLI::App* check = app.add_subcommand(
      "check-sweep", "verify hybrid = w pour + (1 - w) shake on every row of a sweep CSV");
  check->add_option("sweep_csv", check_in, "sweep CSV")->required();
  check->add_option("--tolerance", check_tolerance, "allowed absolute deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train) {
      RunConfig config = ResolveConfig(train_flags);
      TrainResult result = RunTraining(config, &out);
      if (result.history.aborted) {
        err << "error: training aborted: " << result.history.abort_reason
            << " (last good checkpoint kept)\n";
        return 1;
      }
      return 0;
    }
    if (*sweep) {
      RunConfig config = ResolveConfig(sweep_flags);
      if (!sweep_weights.empty()) {
        config.sweep_weights = sweep_weights;
        config.Validate();
      }
      SweepResult result = RunSweep(config, &out);
      out << SweepTable(result);
      for (const SweepRow& row : result.rows) {
        if (!row.ok()) return 1;
      }
      return 0;
    }
    if (*simulate) {
      RunConfig config = sim_flags.config_path.empty() ? RunConfig{} : LoadConfig(sim_flags.config_path);
      for (const std::string& a : sim_flags.overrides) ApplyOverride(config, a);
      const std::uint64_t seed = sim_flags.seed.value_or(config.seed);
      const PotShape shape = sim_shape.empty()
                                 ? PotShape(config.episode.base_radius, config.episode.height)
                                 : LoadShape(sim_shape);
      std::ofstream dump;
      std::optional<ParticleDumpWriter> writer;
      FrameObserver observer;
      if (!sim_dump.empty()) {
        dump.open(sim_dump, std::ios::binary);
        if (!dump) throw IoError("cannot write " + sim_dump);
        writer.emplace(dump);
        observer = writer->AsObserver();
      }
      TaskOutcome outcome;
      double reward;
      if (sim_task == "pour") {
        outcome = SimulatePour(shape, config.episode.sim, config.episode.cup, seed, observer);
        reward = RewardPour(outcome);
      } else {
        outcome = SimulateShake(shape, config.episode.sim, seed, observer);
        reward = RewardShake(outcome);
      }
      out << "task " << sim_task << "\n"
          << "seed " << seed << "\n"
          << "n_total " << outcome.n_total << "\n"
          << "n_cup " << outcome.n_cup << "\n"
          << "n_pot " << outcome.n_pot << "\n"
          << "n_spilled " << outcome.n_spilled << "\n"
          << "reward " << FormatDouble(reward) << "\n";
      if (dump.is_open() && !dump) throw IoError("write failed for " + sim_dump);
      return 0;
    }
    if (*export_mesh) {
      const PotShape shape = mesh_shape.empty() ? PotShape() : LoadShape(mesh_shape);
      ExportObj(BuildPointCloud(shape), mesh_out);
      out << "wrote " << mesh_out << "\n";
      return 0;
    }
    if (*plot) {
      const std::vector<RewardRow> rows = ReadRewardCsv(plot_in);
      if (rows.empty()) throw UsageError(plot_in + " has no reward rows");
      WriteFile(plot_out, RenderRewardPlot(rows, plot_title));
      out << "wrote " << plot_out << " (" << rows.size() << " points)\n";
      return 0;
    }
    if (*check) {
      const std::vector<SweepRow> rows = ParseSweepCsv(ReadFile(check_in));
      int bad = 0;
      for (const SweepRow& row : rows) {
        if (!row.ok()) continue;
        const bool ok = SweepRowConsistent(row, check_tolerance);
        if (!ok) ++bad;
        out << "w " << FormatDouble(row.weight) << ": "
            << (ok ? "consistent" : "INCONSISTENT") << "\n";
      }
      return bad == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace potrl
