// asmflow: data generation, training, sampling, evaluation, property checks
// and benchmarks for rigid multi-piece assembly.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "asmflow/commands.hpp"
#include "asmflow/error.hpp"

namespace fs = std::filesystem;
using namespace asmflow;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<int> order;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App& cmd, Overrides& o, bool with_steps, bool with_order) {
  cmd.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd.add_option("--seed", o.seed, "seed for every random stream");
  if (with_steps) cmd.add_option("--steps", o.steps, "training steps (train) or integration steps (sample, eval)");
  if (with_order) cmd.add_option("--order", o.order, "integrator order")->check(CLI::IsMember({1, 4}));
  cmd.add_option("--out", o.out, "output directory");
  cmd.add_option("--device-threads", o.threads, "worker threads (default: ASMFLOW_THREADS or the config)")
      ->check(CLI::PositiveNumber);
}

// Config file first, then the environment, then flags.
app::RunConfig resolve(const Overrides& o, bool steps_are_training) {
  app::RunConfig cfg = o.config.empty() ? app::RunConfig{} : app::load_config(o.config);
  if (const char* env = std::getenv("ASMFLOW_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v < 1) throw std::invalid_argument(env);
      cfg.threads = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw Error(Errc::InvalidConfig, std::string("ASMFLOW_THREADS must be a positive integer, got ") + env);
    }
  }
  if (o.threads) cfg.threads = *o.threads;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.steps) (steps_are_training ? cfg.train.steps : cfg.sampler.steps) = *o.steps;
  if (o.order) cfg.sampler.order = *o.order;
  if (o.out) cfg.out = *o.out;
  cfg.train.threads = cfg.threads;
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App cli{"asmflow: flow-matching assembly of rigid pieces"};
  cli.require_subcommand(1);
  Overrides o;

  auto* gen = cli.add_subcommand("gen", "generate a synthetic dataset under data.root");
  add_common(*gen, o, false, false);

  auto* train = cli.add_subcommand("train", "train on the train split; writes checkpoints and train_log.jsonl");
  add_common(*train, o, true, false);
  bool resume = false;
  train->add_flag("--resume", resume, "continue from the configured checkpoint when it exists");

  auto* sample = cli.add_subcommand("sample", "sample poses for the test split into <out>/samples");
  add_common(*sample, o, true, true);
  bool trajectories = false;
  sample->add_flag("--trajectories", trajectories, "also write per-step poses to <out>/trajectories");

  auto* eval = cli.add_subcommand("eval", "score the test split; writes <out>/eval.md and eval_metrics.json");
  add_common(*eval, o, true, true);
  std::string predictions;
  eval->add_option("--predictions", predictions, "score pose files from this directory instead of sampling")
      ->check(CLI::ExistingDirectory);

  auto* check = cli.add_subcommand("check", "run the property suites on a randomly initialized model");
  add_common(*check, o, false, false);

  auto* bench = cli.add_subcommand("bench", "time message passing and sampling");
  add_common(*bench, o, false, false);
  std::size_t edges = 10000;
  int reps = 5;
  bench->add_option("--edges", edges, "edges in the message benchmark")->check(CLI::PositiveNumber);
  bench->add_option("--reps", reps, "timed repetitions (median reported)")->check(CLI::PositiveNumber);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      const auto cfg = resolve(o, true);
      app::generate_dataset(cfg);
      std::cout << "wrote " << cfg.data.train_count << " train and " << cfg.data.test_count << " test shapes to "
                << cfg.data.root << '\n';
    } else if (*train) {
      const auto cfg = resolve(o, true);
      const auto ck = app::run_train(cfg, resume);
      std::cout << "trained to step " << ck.step << "; checkpoint " << cfg.checkpoint_path().string() << '\n';
    } else if (*sample) {
      const auto cfg = resolve(o, false);
      const auto preds = app::run_sample(cfg, trajectories);
      std::cout << "sampled " << preds.size() << " shapes with " << app::method_label(cfg.sampler) << " into "
                << (fs::path(cfg.out) / "samples").string() << '\n';
    } else if (*eval) {
      const auto cfg = resolve(o, false);
      const auto row = app::run_eval(cfg, predictions);
      std::cout << app::format_table({row});
    } else if (*check) {
      const auto cfg = resolve(o, true);
      const auto results = app::run_checks(cfg.model, cfg.seed, &std::cout);
      std::size_t failed = 0;
      for (const auto& r : results) failed += !r.passed;
      std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
      return failed ? kFailure : kOk;
    } else if (*bench) {
      const auto cfg = resolve(o, true);
      const auto m = app::bench_messages(edges, cfg.model.l_max, cfg.model.channels, reps, cfg.seed);
      std::cout << "| Message | Edges | l_max | Channels | Time (ms) | Edges/s |\n|---|---|---|---|---|---|\n";
      std::cout << "| tensor product | " << m.edges << " | " << m.l_max << " | " << m.channels << " | "
                << m.tp_seconds * 1e3 << " | " << m.edges / m.tp_seconds << " |\n";
      std::cout << "| SO(2)-reduced | " << m.edges << " | " << m.l_max << " | " << m.channels << " | "
                << m.so2_seconds * 1e3 << " | " << m.edges / m.so2_seconds << " |\n";
      std::cout << "speedup " << m.speedup() << "x, max |difference| " << m.max_diff << "\n\n";
      const auto s = app::bench_sampling(cfg, {{1, 10}, {4, 10}, {1, 50}, {4, cfg.sampler.steps}}, reps);
      std::cout << "| Sampler | Time/shape (s) |\n|---|---|\n";
      for (const auto& b : s) std::cout << "| " << b.method << " | " << b.seconds << " |\n";
    }
  } catch (const Error& e) {
    std::cerr << "asmflow: " << e.what() << '\n';
    return e.code() == Errc::InvalidConfig ? kUsage : kFailure;
  } catch (const std::exception& e) {
    std::cerr << "asmflow: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
