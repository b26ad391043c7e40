#include "asmflow/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "asmflow/error.hpp"
#include "asmflow/irreps.hpp"

namespace asmflow::app {

namespace fs = std::filesystem;

namespace {

lie::Rng stream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
  std::seed_seq seq{seed, index, tag};
  return lie::Rng(seq);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs body(k) for k in [0, n) on `threads` workers with a static stride.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  const std::size_t nt = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errs(nt);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t k = w; k < n; k += nt) body(k);
    } catch (...) {
      errs[w] = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < nt; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Non-finite errors (a diverged sample) order after every finite one.
double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end(), [](double a, double b) { return std::isnan(b) ? !std::isnan(a) : a < b; });
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

void generate_dataset(const RunConfig& cfg) {
  const auto family = data::parse_family(cfg.data.family);
  const std::pair<const char*, std::size_t> splits[] = {{"train", cfg.data.train_count}, {"test", cfg.data.test_count}};
  std::uint64_t tag = 1;
  for (const auto& [name, count] : splits) {
    lie::Rng rng = stream(cfg.seed, tag++, 0x6e6e);
    auto recs = data::generate_synthetic(family, cfg.data.n_pieces, count, cfg.data.synthetic, rng);
    for (auto& r : recs) r.split = name;
    const fs::path dir = fs::path(cfg.data.root) / name;
    if (fs::exists(dir)) fs::remove_all(dir);
    data::write_dataset(cfg.data.root, recs);
  }
}

std::vector<data::AssemblyRecord> load_split(const RunConfig& cfg, const std::string& split) {
  auto recs = data::read_split(cfg.data.root, split);
  if (recs.empty()) throw Error(Errc::IoError, "split " + split + " under " + cfg.data.root + " has no shapes");
  if (cfg.data.grid_cell > 0)
    for (auto& r : recs)
      for (auto& p : r.pieces.pieces) p = data::grid_downsample(p, cfg.data.grid_cell);
  return recs;
}

flowmatch::Checkpoint run_train(const RunConfig& cfg, bool resume) {
  const auto recs = load_split(cfg, "train");
  std::optional<flowmatch::Checkpoint> start;
  if (resume && fs::exists(cfg.checkpoint_path())) start = flowmatch::load_checkpoint(cfg.checkpoint_path());
  auto ck = flowmatch::train(recs, cfg.model, cfg.train, cfg.out, std::move(start));
  if (cfg.checkpoint_path() != fs::path(cfg.out) / "checkpoint.bin")
    flowmatch::save_checkpoint(cfg.checkpoint_path(), ck);
  const auto points = read_loss_log(fs::path(cfg.out) / "train_log.jsonl");
  std::ofstream(fs::path(cfg.out) / "loss_curve.svg") << loss_curve_svg(points, "training loss");
  return ck;
}

std::vector<ShapePrediction> predict(const equinet::VectorField& field, const std::vector<data::AssemblyRecord>& recs,
                                     const sampler::SamplerConfig& sampler, double omega, std::uint64_t seed,
                                     std::size_t threads, const fs::path& trajectory_dir) {
  sampler.validate();
  if (!trajectory_dir.empty()) fs::create_directories(trajectory_dir);
  sampler::SamplerConfig sc = sampler;
  sc.record_trajectory = !trajectory_dir.empty();
  std::vector<ShapePrediction> out(recs.size());
  parallel_for(recs.size(), threads, [&](std::size_t k) {
    const auto t0 = std::chrono::steady_clock::now();
    lie::Rng rng = stream(seed, k, 0x5a3e);
    const auto tr = sampler::sample(field, recs[k].pieces, sc, rng, omega);
    out[k] = {recs[k].shape_id, tr.final, seconds_since(t0)};
    if (sc.record_trajectory) {
      std::ofstream f(trajectory_dir / (recs[k].shape_id + ".jsonl"));
      sampler::write_trajectory(f, tr);
      if (!f) throw Error(Errc::IoError, "cannot write trajectory for " + recs[k].shape_id);
    }
  });
  return out;
}

void write_predictions(const fs::path& dir, const std::vector<ShapePrediction>& preds) {
  fs::create_directories(dir);
  for (const auto& p : preds) data::write_poses(dir / (p.shape_id + ".json"), p.shape_id, p.poses);
}

std::vector<ShapePrediction> read_predictions(const fs::path& dir, const std::vector<data::AssemblyRecord>& recs) {
  std::vector<ShapePrediction> out;
  for (const auto& r : recs) {
    const fs::path f = dir / (r.shape_id + ".json");
    if (!fs::exists(f)) throw Error(Errc::IoError, "no prediction for " + r.shape_id + " in " + dir.string());
    out.push_back({r.shape_id, data::read_poses(f), 0.0});
  }
  return out;
}

namespace {

equinet::VectorField load_field(const RunConfig& cfg) {
  const auto ck = flowmatch::load_checkpoint(cfg.checkpoint_path());
  return equinet::VectorField(ck.model, flowmatch::inference_params(ck));
}

}  // namespace

std::vector<ShapePrediction> run_sample(const RunConfig& cfg, bool trajectories) {
  const auto recs = load_split(cfg, "test");
  const auto field = load_field(cfg);
  const fs::path out = fs::path(cfg.out) / "samples";
  if (fs::exists(out)) fs::remove_all(out);
  auto preds = predict(field, recs, cfg.sampler, cfg.train.omega, cfg.seed, cfg.threads,
                       trajectories ? fs::path(cfg.out) / "trajectories" : fs::path{});
  write_predictions(out, preds);
  return preds;
}

std::string method_label(const sampler::SamplerConfig& cfg) {
  return "RK" + std::to_string(cfg.order) + ", " + std::to_string(cfg.steps) + " steps";
}

std::vector<ShapeMetric> score(const std::vector<data::AssemblyRecord>& recs,
                               const std::vector<ShapePrediction>& preds) {
  if (recs.size() != preds.size()) throw Error(Errc::LengthMismatch, "prediction count differs from shape count");
  std::vector<ShapeMetric> out;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    if (recs[k].shape_id != preds[k].shape_id)
      throw Error(Errc::LengthMismatch, "prediction " + preds[k].shape_id + " does not match " + recs[k].shape_id);
    const auto m = data::pairwise_error(preds[k].poses, recs[k].gt);
    out.push_back({recs[k].shape_id, m.delta_r, m.delta_t, preds[k].seconds});
  }
  return out;
}

EvalRow summarize(const std::string& method, const std::vector<ShapeMetric>& metrics) {
  EvalRow row;
  row.method = method;
  row.shapes = metrics.size();
  if (metrics.empty()) return row;
  std::vector<double> r, t;
  double secs = 0;
  for (const auto& m : metrics) {
    r.push_back(m.delta_r);
    t.push_back(m.delta_t);
    secs += m.seconds;
  }
  const auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    sd = 0;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size()));
  };
  stats(r, row.mean_r, row.std_r);
  stats(t, row.mean_t, row.std_t);
  row.median_r = median(r);
  row.median_t = median(t);
  row.seconds = secs / static_cast<double>(metrics.size());
  return row;
}

std::string format_table(const std::vector<EvalRow>& rows) {
  std::ostringstream s;
  s << "| Method | Shapes | Δr mean (°) | Δr std | Δr median | Δt mean | Δt std | Δt median | Time/shape (s) |\n";
  s << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows)
    s << "| " << r.method << " | " << r.shapes << " | " << fmt(r.mean_r, 2) << " | " << fmt(r.std_r, 2) << " | "
      << fmt(r.median_r, 2) << " | " << fmt(r.mean_t, 4) << " | " << fmt(r.std_t, 4) << " | " << fmt(r.median_t, 4)
      << " | " << fmt(r.seconds, 3) << " |\n";
  return s.str();
}

void write_eval(const fs::path& out, const std::vector<EvalRow>& rows, const std::vector<ShapeMetric>& metrics) {
  fs::create_directories(out);
  std::ofstream(out / "eval.md") << format_table(rows);
  json j;
  j["rows"] = json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"method", r.method},
                         {"shapes", r.shapes},
                         {"delta_r", {{"mean", r.mean_r}, {"std", r.std_r}, {"median", r.median_r}}},
                         {"delta_t", {{"mean", r.mean_t}, {"std", r.std_t}, {"median", r.median_t}}}});
  j["shapes"] = json::array();
  for (const auto& m : metrics)
    j["shapes"].push_back({{"shape_id", m.shape_id}, {"delta_r", m.delta_r}, {"delta_t", m.delta_t}});
  std::ofstream f(out / "eval_metrics.json");
  f << j.dump(2) << '\n';
  if (!f) throw Error(Errc::IoError, "cannot write " + (out / "eval_metrics.json").string());
}

EvalRow run_eval(const RunConfig& cfg, const fs::path& predictions) {
  const auto recs = load_split(cfg, "test");
  std::vector<ShapePrediction> preds;
  std::string method;
  if (!predictions.empty()) {
    preds = read_predictions(predictions, recs);
    method = "predictions";
  } else {
    const auto field = load_field(cfg);
    preds = predict(field, recs, cfg.sampler, cfg.train.omega, cfg.seed, cfg.threads);
    method = method_label(cfg.sampler);
  }
  const auto metrics = score(recs, preds);
  const auto row = summarize(method, metrics);
  write_eval(cfg.out, {row}, metrics);
  return row;
}

MessageBench bench_messages(std::size_t edges, int l_max, int channels, int reps, std::uint64_t seed) {
  using namespace irreps;
  lie::Rng rng(seed);
  const IrrepsSpec spec{l_max, channels};
  const auto w = So2Weights::random(spec, {}, rng);
  const auto tp = tp_weights_from_so2(w);
  const std::size_t points = std::max<std::size_t>(1, edges / 10);
  const std::size_t per = static_cast<std::size_t>(spec.components() * channels);
  std::normal_distribution<double> normal;
  std::vector<double> feats(points * per);
  for (auto& v : feats) v = normal(rng);
  std::vector<MessageEdge> list;
  std::uniform_int_distribution<std::size_t> pick(0, points - 1);
  for (std::size_t e = 0; e < edges; ++e) {
    Vec3 v(normal(rng), normal(rng), normal(rng));
    while (v.norm() < 1e-3) v = Vec3(normal(rng), normal(rng), normal(rng));
    list.push_back({pick(rng), make_edge_frame(v)});
  }
  std::vector<double> a(edges * per), b(edges * per);
  so2_messages(feats, list, w, a);
  tp_messages(feats, list, tp, b);
  MessageBench res{edges, l_max, channels};
  for (std::size_t i = 0; i < a.size(); ++i) res.max_diff = std::max(res.max_diff, std::abs(a[i] - b[i]));
  std::vector<double> t_so2, t_tp;
  for (int r = 0; r < std::max(1, reps); ++r) {
    auto t0 = std::chrono::steady_clock::now();
    so2_messages(feats, list, w, a);
    t_so2.push_back(seconds_since(t0));
    t0 = std::chrono::steady_clock::now();
    tp_messages(feats, list, tp, b);
    t_tp.push_back(seconds_since(t0));
  }
  res.so2_seconds = median(t_so2);
  res.tp_seconds = median(t_tp);
  return res;
}

std::vector<SamplingBench> bench_sampling(const RunConfig& cfg, const std::vector<sampler::SamplerConfig>& settings,
                                          int reps) {
  lie::Rng rng = stream(cfg.seed, 0, 0xbe7c);
  const auto params = equinet::init_params(cfg.model, rng);
  const equinet::VectorField field(cfg.model, params);
  data::SyntheticParams sp = cfg.data.synthetic;
  const auto recs = data::generate_synthetic(data::parse_family(cfg.data.family), cfg.data.n_pieces, 1, sp, rng);
  std::vector<SamplingBench> out;
  for (const auto& s : settings) {
    (void)predict(field, recs, s, cfg.train.omega, cfg.seed, 1);
    std::vector<double> times;
    for (int r = 0; r < std::max(1, reps); ++r) times.push_back(predict(field, recs, s, cfg.train.omega, cfg.seed, 1)[0].seconds);
    out.push_back({method_label(s), median(times)});
  }
  return out;
}

std::vector<std::pair<double, double>> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<std::pair<double, double>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.emplace_back(j.at("step").get<double>(), j.at("loss").get<double>());
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace asmflow::app
