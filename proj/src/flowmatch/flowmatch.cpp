#include "asmflow/flowmatch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <thread>

#include "asmflow/error.hpp"
#include "json.hpp"

namespace asmflow::flowmatch {

using tensor::Tensor;

double TimeSampler::operator()(lie::Rng& rng) const {
  std::normal_distribution<double> n(mean, stddev);
  // Clamp keeps the value strictly inside (0, 1) in double precision.
  const double z = std::clamp(n(rng), -30.0, 30.0);
  return 1.0 / (1.0 + std::exp(-z));
}

TrainSample build_sample(const PieceSet& x, const lie::GroupElementN& g0, const lie::GroupElementN& g1_tilde,
                         double tau) {
  if (x.size() != g0.size() || x.size() != g1_tilde.size())
    throw Error(Errc::LengthMismatch, "sample poses differ from the piece count");
  lie::PathPair pp = lie::make_path_pair(g0, g1_tilde);
  TrainSample s;
  s.x = x;
  s.g0 = g0;
  s.g1_tilde = g1_tilde;
  s.r_star = pp.r_star;
  s.g1 = std::move(pp.g1);
  s.tau = tau;
  s.xi = std::move(pp.xi);
  s.h_tau = lie::eval_path(g0, s.xi, tau);
  return s;
}

TrainSample make_sample(const PieceSet& x, const lie::GroupElementN& gt, const SampleParams& params,
                        lie::Rng& rng) {
  for (int attempt = 0;; ++attempt) {
    const lie::GroupElementN g0 = lie::sample_noise(x.size(), {params.omega}, rng);
    const lie::GroupElementN g1_tilde = lie::left_rotate(lie::haar_rotation(rng), gt);
    const double tau = params.time(rng);
    try {
      return build_sample(x, g0, g1_tilde, tau);
    } catch (const Error& e) {
      const bool redraw = e.code() == Errc::AngleNearPi || e.code() == Errc::DegenerateCovariance;
      if (!redraw || attempt + 1 >= params.max_attempts) throw;
    }
  }
}

template <typename T>
Tensor<T> sample_loss(const Tensor<T>& pred, const lie::TwistN& xi, const LossWeights& w) {
  const std::size_t n = xi.size();
  if (pred.rank() != 2 || pred.dim(0) != n || pred.dim(1) != 6)
    throw Error(Errc::ShapeMismatch, "prediction must be [N, 6] for N target twists");
  std::vector<T> target(n * 6);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      target[i * 6 + a] = static_cast<T>(xi[i].w(a));
      target[i * 6 + 3 + a] = static_cast<T>(xi[i].t(a));
    }
  const T wr = static_cast<T>(w.rotation), wt = static_cast<T>(w.translation);
  const auto weights = Tensor<T>::from({6}, {wr, wr, wr, wt, wt, wt});
  const auto d = tensor::sub(pred, Tensor<T>::from({n, 6}, std::move(target)));
  return tensor::reduce_sum(tensor::mul_rowvec(tensor::mul(d, d), weights));
}

template Tensor<float> sample_loss<float>(const Tensor<float>&, const lie::TwistN&, const LossWeights&);
template Tensor<double> sample_loss<double>(const Tensor<double>&, const lie::TwistN&, const LossWeights&);

double batch_loss(const equinet::Network<double>& net, const std::vector<TrainSample>& batch, const LossWeights& w) {
  if (batch.empty()) throw Error(Errc::ShapeMismatch, "loss of an empty batch");
  double s = 0;
  for (const auto& b : batch) s += sample_loss(net.forward(b.x, b.h_tau, b.tau), b.xi, w).item();
  return s / static_cast<double>(batch.size());
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (!(lr > 0)) fail("lr must be positive");
  if (schedule != "constant" && schedule != "cosine") fail("schedule must be constant or cosine");
  if (weight_decay < 0) fail("weight_decay must be non-negative");
  if (!(ema_decay >= 0 && ema_decay < 1)) fail("ema_decay must be in [0, 1)");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(omega > 0)) fail("omega must be positive");
  if (!(time_std > 0)) fail("time_std must be positive");
  if (grad_clip < 0) fail("grad_clip must be non-negative");
  if (rotation_weight < 0 || translation_weight < 0) fail("loss weights must be non-negative");
  if (log_every < 1) fail("log_every must be positive");
  if (threads < 1) fail("threads must be positive");
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  const double s = static_cast<double>(step);
  double lr = cfg.lr;
  if (cfg.schedule == "cosine" && cfg.steps > cfg.warmup_steps) {
    const double span = static_cast<double>(cfg.steps - cfg.warmup_steps);
    const double done = std::clamp((s - static_cast<double>(cfg.warmup_steps)) / span, 0.0, 1.0);
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * done));
  }
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) lr *= s / static_cast<double>(cfg.warmup_steps);
  return lr;
}

std::vector<TrainSample> draw_batch(const std::vector<data::AssemblyRecord>& dataset, const TrainConfig& cfg,
                                    std::size_t step, std::vector<std::size_t>* shape_index) {
  if (dataset.empty()) throw Error(Errc::InvalidConfig, "training needs a non-empty dataset");
  std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(step), std::uint64_t{0x5a17}};
  lie::Rng rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  const SampleParams sp{cfg.omega, {cfg.time_mean, cfg.time_std}};
  std::vector<TrainSample> out;
  if (shape_index) shape_index->clear();
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const std::size_t s = pick(rng);
    if (shape_index) shape_index->push_back(s);
    out.push_back(make_sample(dataset[s].pieces, dataset[s].gt, sp, rng));
  }
  return out;
}

namespace {

struct SampleGrad {
  double loss = 0;
  std::vector<double> grad;
};

SampleGrad sample_gradient(const equinet::ModelConfig& model, const equinet::ParamStore& params,
                           const equinet::PieceGraph& pg, const TrainSample& s, const LossWeights& w) {
  const equinet::Network<float> net(model, params, true);
  tensor::Tape<float> tape;
  tensor::TapeScope<float> scope(tape);
  const auto loss = sample_loss(net.forward(s.x, pg, s.h_tau, s.tau), s.xi, w);
  SampleGrad out;
  out.loss = loss.item();
  if (std::isfinite(out.loss)) {
    tape.backward(loss);
    net.accumulate_grads(out.grad);
  }
  return out;
}

}  // namespace

Checkpoint train(const std::vector<data::AssemblyRecord>& dataset, const equinet::ModelConfig& model,
                 const TrainConfig& cfg, const std::filesystem::path& out, std::optional<Checkpoint> start,
                 const TrainHooks& hooks) {
  model.validate();
  cfg.validate();
  if (dataset.empty()) throw Error(Errc::InvalidConfig, "training needs a non-empty dataset");
  std::filesystem::create_directories(out);

  Checkpoint ck;
  if (start) {
    if (!(start->model == model)) throw Error(Errc::InvalidConfig, "checkpoint was written for another model");
    ck = std::move(*start);
    ck.train = cfg;
  } else {
    lie::Rng init_rng(cfg.seed);
    ck.model = model;
    ck.train = cfg;
    ck.params = equinet::init_params(model, init_rng);
    ck.ema = ck.params.flatten();
  }
  AdamW opt({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  if (!ck.adam_m.empty()) opt.restore(ck.step, ck.adam_m, ck.adam_v);
  std::vector<float> flat = ck.params.flatten();
  if (ck.ema.empty()) ck.ema = flat;

  std::vector<equinet::PieceGraph> graphs;
  graphs.reserve(dataset.size());
  for (const auto& r : dataset) graphs.push_back(equinet::PieceGraph::build(r.pieces, model));

  std::ofstream log(out / "train_log.jsonl", start ? std::ios::app : std::ios::trunc);
  if (!log) throw Error(Errc::IoError, "cannot write " + (out / "train_log.jsonl").string());
  const LossWeights lw{cfg.rotation_weight, cfg.translation_weight};
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t step = ck.step + 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> idx;
    const auto batch = draw_batch(dataset, cfg, step, &idx);
    std::vector<SampleGrad> res(batch.size());
    {
      const std::size_t nt = std::min(cfg.threads, batch.size());
      std::vector<std::exception_ptr> errs(nt);
      auto work = [&](std::size_t w) {
        try {
          for (std::size_t b = w; b < batch.size(); b += nt)
            res[b] = sample_gradient(model, ck.params, graphs[idx[b]], batch[b], lw);
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

    double loss = 0;
    for (const auto& r : res) loss += r.loss;
    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss)) {
      nlohmann::json dump;
      dump["step"] = step;
      dump["loss"] = std::to_string(loss);
      for (std::size_t b = 0; b < batch.size(); ++b)
        dump["samples"].push_back({{"shape_id", dataset[idx[b]].shape_id},
                                   {"tau", batch[b].tau},
                                   {"loss", std::to_string(res[b].loss)}});
      std::ofstream(out / "nan_dump.json") << dump.dump(2) << '\n';
      throw Error(Errc::NaNLoss, "non-finite loss at step " + std::to_string(step) + "; see " +
                                     (out / "nan_dump.json").string());
    }

    std::vector<double> grad(flat.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& r : res)
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i] * inv;
    const double gnorm = clip_grad_norm(grad, cfg.grad_clip);
    const double lr = learning_rate(cfg, step);
    opt.set_lr(lr);
    opt.step(flat, grad);
    ck.params.assign(flat);
    ema_update(ck.ema, flat, cfg.ema_decay);
    ck.step = step;
    ck.adam_m = opt.m();
    ck.adam_v = opt.v();

    if (step % cfg.log_every == 0) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << nlohmann::json{{"step", step}, {"loss", loss}, {"lr", lr}, {"grad_norm", gnorm}, {"wall_time", wall}}
                 .dump()
          << '\n';
      log.flush();
    }
    if (hooks.on_step) hooks.on_step(step, loss);
    if (cfg.checkpoint_every && step % cfg.checkpoint_every == 0 && step != cfg.steps)
      save_checkpoint(out / ("checkpoint_" + std::to_string(step) + ".bin"), ck);
  }
  save_checkpoint(out / "checkpoint.bin", ck);
  return ck;
}

}  // namespace asmflow::flowmatch
