#pragma once

// Command implementations behind the asmflow tool. Each command reads a
// validated RunConfig and writes its outputs below cfg.out (or the dataset
// root for gen).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "asmflow/config.hpp"
#include "asmflow/data.hpp"
#include "asmflow/flowmatch.hpp"
#include "asmflow/model.hpp"
#include "asmflow/sampler.hpp"

namespace asmflow::app {

/// Writes the train and test splits under cfg.data.root.
void generate_dataset(const RunConfig& cfg);

/// Reads a split and applies the configured grid downsampling.
std::vector<data::AssemblyRecord> load_split(const RunConfig& cfg, const std::string& split);

/// Trains on the train split. With `resume` set and a checkpoint present at
/// cfg.checkpoint_path(), training continues from it. Also renders
/// <out>/loss_curve.svg from the log.
flowmatch::Checkpoint run_train(const RunConfig& cfg, bool resume);

struct ShapePrediction {
  std::string shape_id;
  lie::GroupElementN poses;
  double seconds = 0.0;
};

/// Samples every record with the configured integrator, using `threads`
/// workers. The noise of shape k comes from a stream seeded by (seed, k), so
/// results do not depend on the thread count. When `trajectory_dir` is not
/// empty each trajectory is written there as <shape_id>.jsonl.
std::vector<ShapePrediction> predict(const equinet::VectorField& field, const std::vector<data::AssemblyRecord>& recs,
                                     const sampler::SamplerConfig& sampler, double omega, std::uint64_t seed,
                                     std::size_t threads, const std::filesystem::path& trajectory_dir = {});

void write_predictions(const std::filesystem::path& dir, const std::vector<ShapePrediction>& preds);
/// Reads <dir>/<shape_id>.json for every record.
std::vector<ShapePrediction> read_predictions(const std::filesystem::path& dir,
                                              const std::vector<data::AssemblyRecord>& recs);

/// Runs sampling on the test split from the checkpoint's EMA weights and
/// writes <out>/samples/.
std::vector<ShapePrediction> run_sample(const RunConfig& cfg, bool trajectories);

struct ShapeMetric {
  std::string shape_id;
  double delta_r = 0.0;
  double delta_t = 0.0;
  double seconds = 0.0;
};

struct EvalRow {
  std::string method;
  std::size_t shapes = 0;
  double mean_r = 0, std_r = 0, median_r = 0;
  double mean_t = 0, std_t = 0, median_t = 0;
  double seconds = 0;  // mean wall time per shape
};

/// "RK<p>, <q> steps".
std::string method_label(const sampler::SamplerConfig& cfg);

std::vector<ShapeMetric> score(const std::vector<data::AssemblyRecord>& recs,
                               const std::vector<ShapePrediction>& preds);
EvalRow summarize(const std::string& method, const std::vector<ShapeMetric>& metrics);

/// Markdown table with one row per method.
std::string format_table(const std::vector<EvalRow>& rows);

/// Writes <out>/eval.md (the table, wall time included) and
/// <out>/eval_metrics.json (per-shape errors only, so reruns compare equal).
void write_eval(const std::filesystem::path& out, const std::vector<EvalRow>& rows,
                const std::vector<ShapeMetric>& metrics);

/// Scores predictions read from `predictions` when given, otherwise samples
/// the test split first.
EvalRow run_eval(const RunConfig& cfg, const std::filesystem::path& predictions = {});

struct CheckResult {
  std::string suite;
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Property suites on a randomly initialized model: group maps, rotation
/// correction, network equivariance, sampling relatedness, loss symmetry,
/// message equivalence and integrator exactness.
std::vector<CheckResult> run_checks(const equinet::ModelConfig& model, std::uint64_t seed, std::ostream* progress);

struct MessageBench {
  std::size_t edges = 0;
  int l_max = 0;
  int channels = 0;
  double tp_seconds = 0.0;   // median over repetitions
  double so2_seconds = 0.0;
  double max_diff = 0.0;
  double speedup() const { return tp_seconds / so2_seconds; }
};

/// Times the full tensor-product message against the SO(2)-reduced one on
/// the same random graph after one warm-up pass.
MessageBench bench_messages(std::size_t edges, int l_max, int channels, int reps, std::uint64_t seed);

struct SamplingBench {
  std::string method;
  double seconds = 0.0;  // median per shape
};

/// Per-shape sampling time of a randomly initialized model for each
/// integrator setting.
std::vector<SamplingBench> bench_sampling(const RunConfig& cfg, const std::vector<sampler::SamplerConfig>& settings,
                                          int reps);

/// Reads (step, loss) pairs from a train_log.jsonl file.
std::vector<std::pair<double, double>> read_loss_log(const std::filesystem::path& path);

/// Standalone SVG line plot of loss against step, log-scaled loss axis.
std::string loss_curve_svg(const std::vector<std::pair<double, double>>& points, const std::string& title);

}  // namespace asmflow::app
