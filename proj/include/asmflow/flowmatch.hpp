#pragma once

// Flow-matching training: sample construction, regression loss, AdamW with
// EMA, checkpoints and the training loop.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "asmflow/data.hpp"
#include "asmflow/lie.hpp"
#include "asmflow/model.hpp"

namespace asmflow::flowmatch {

struct TimeSampler {
  double mean = 0.0;
  double stddev = 1.0;

  /// logistic(z) with z ~ N(mean, stddev^2); always in (0, 1).
  double operator()(lie::Rng& rng) const;
};

struct TrainSample {
  PieceSet x;
  lie::GroupElementN g0;
  lie::GroupElementN g1_tilde;
  lie::Rotation r_star;
  lie::GroupElementN g1;
  double tau = 0.0;
  lie::TwistN xi;
  lie::GroupElementN h_tau;
};

/// Deterministic part of the construction for given draws.
TrainSample build_sample(const PieceSet& x, const lie::GroupElementN& g0, const lie::GroupElementN& g1_tilde,
                         double tau);

struct SampleParams {
  double omega = 1.0;
  TimeSampler time;
  int max_attempts = 16;
};

/// Draws g0 ~ noise, a uniform data rotation r (g1_tilde = r gt) and tau,
/// then applies the rotation correction. Draws that hit a degenerate
/// correction or a near-pi logarithm are redrawn.
TrainSample make_sample(const PieceSet& x, const lie::GroupElementN& gt, const SampleParams& params,
                        lie::Rng& rng);

struct LossWeights {
  double rotation = 1.0;
  double translation = 1.0;
};

/// sum_i w_r |w_i - xi_i.w|^2 + w_t |t_i - xi_i.t|^2 as a differentiable
/// scalar, for network output rows [N, 6].
template <typename T>
tensor::Tensor<T> sample_loss(const tensor::Tensor<T>& pred, const lie::TwistN& xi, const LossWeights& w);

/// Mean of sample_loss over a batch, evaluated in float64 with frozen weights.
double batch_loss(const equinet::Network<double>& net, const std::vector<TrainSample>& batch,
                  const LossWeights& w = {});

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay Adam over a flat float32 parameter vector.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
  void step(std::vector<float>& params, const std::vector<double>& grad);
  void set_lr(double lr) noexcept { cfg_.lr = lr; }

  std::uint64_t steps() const noexcept { return t_; }
  std::vector<float>& m() noexcept { return m_; }
  std::vector<float>& v() noexcept { return v_; }
  void restore(std::uint64_t t, std::vector<float> m, std::vector<float> v);

 private:
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<float> m_, v_;
};

/// shadow <- decay * shadow + (1 - decay) * params.
void ema_update(std::vector<float>& shadow, const std::vector<float>& params, double decay);

/// Scales `grad` to global norm at most `max_norm`; returns the norm before.
double clip_grad_norm(std::vector<double>& grad, double max_norm);

struct TrainConfig {
  double lr = 1e-4;
  std::string schedule = "constant";  // or "cosine": decays to zero at `steps`
  std::size_t warmup_steps = 0;       // linear ramp from zero
  double weight_decay = 0.01;
  double ema_decay = 0.99;
  std::size_t batch_size = 8;
  std::size_t steps = 1000;
  double omega = 1.0;
  double time_mean = 0.0;
  double time_std = 1.0;
  double grad_clip = 1.0;
  double rotation_weight = 1.0;
  double translation_weight = 1.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::size_t log_every = 1;
  std::size_t threads = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Learning rate used for `step` (1-based).
double learning_rate(const TrainConfig& cfg, std::size_t step);

/// Everything needed to resume training bit-exactly.
struct Checkpoint {
  equinet::ModelConfig model;
  TrainConfig train;
  std::uint64_t step = 0;
  equinet::ParamStore params;
  std::vector<float> ema;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
};

/// Binary layout: the line "ASMFLOW-CKPT 1", an 8-byte little-endian header
/// length, a JSON header (configs, step, array manifest), then the arrays as
/// little-endian float32 in manifest order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters to use for inference: the EMA shadow when present.
equinet::ParamStore inference_params(const Checkpoint& ck);

struct TrainHooks {
  std::function<void(std::size_t step, double loss)> on_step;
};

/// Runs training from `start` (or a fresh initialization) up to
/// cfg.steps. Writes <out>/checkpoint.bin (and step-numbered copies when
/// checkpoint_every > 0) and appends one JSON line per logged step to
/// <out>/train_log.jsonl. Throws NaNLoss after writing <out>/nan_dump.json.
Checkpoint train(const std::vector<data::AssemblyRecord>& dataset, const equinet::ModelConfig& model,
                 const TrainConfig& cfg, const std::filesystem::path& out, std::optional<Checkpoint> start = {},
                 const TrainHooks& hooks = {});

/// The per-step samples, drawn from a stream seeded by (seed, step) so
/// they do not depend on threading or on where a run was resumed.
std::vector<TrainSample> draw_batch(const std::vector<data::AssemblyRecord>& dataset, const TrainConfig& cfg,
                                    std::size_t step, std::vector<std::size_t>* shape_index = nullptr);

}  // namespace asmflow::flowmatch
