#include "asmflow/config.hpp"

#include <fstream>
#include <set>

#include "asmflow/error.hpp"

namespace asmflow::app {

namespace {

// Copies the members of `j` named in `fields` into their targets; any other
// key is rejected.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw Error(Errc::InvalidConfig, where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error(Errc::InvalidConfig, "unknown key '" + k + "' in " + where_);
  }

  template <typename V>
  Reader& field(const char* key, V& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      const json& v = j_.at(key);
      if constexpr (std::is_same_v<V, bool>) {
        if (!v.is_boolean()) throw Error(Errc::InvalidConfig, "");
      } else if constexpr (std::is_integral_v<V>) {
        if (!v.is_number_integer()) throw Error(Errc::InvalidConfig, "");
        if constexpr (std::is_unsigned_v<V>)
          if (v.get<long long>() < 0) throw Error(Errc::InvalidConfig, "");
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!v.is_number()) throw Error(Errc::InvalidConfig, "");
      } else {
        if (!v.is_string()) throw Error(Errc::InvalidConfig, "");
      }
      target = v.get<V>();
    } catch (const Error&) {
      throw Error(Errc::InvalidConfig, "bad value for '" + std::string(key) + "' in " + where_);
    }
    return *this;
  }

  template <typename Fn>
  Reader& section(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (j_.contains(key)) fn(j_.at(key));
    return *this;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const equinet::ModelConfig& c) {
  return {{"n_croco_blocks", c.n_croco_blocks}, {"n_downsample", c.n_downsample},
          {"downsample_ratio", c.downsample_ratio}, {"k_neighbors", c.k_neighbors},
          {"l_max", c.l_max}, {"channels", c.channels}, {"heads", c.heads},
          {"radial_size", c.radial_size}, {"radial_cutoff", c.radial_cutoff},
          {"time_frequencies", c.time_frequencies}, {"literal_elu", c.literal_elu}};
}

json to_json(const flowmatch::TrainConfig& c) {
  return {{"lr", c.lr}, {"schedule", c.schedule}, {"warmup_steps", c.warmup_steps}, {"weight_decay", c.weight_decay}, {"ema_decay", c.ema_decay},
          {"batch_size", c.batch_size}, {"steps", c.steps}, {"omega", c.omega},
          {"time_mean", c.time_mean}, {"time_std", c.time_std}, {"grad_clip", c.grad_clip},
          {"rotation_weight", c.rotation_weight}, {"translation_weight", c.translation_weight},
          {"seed", c.seed}, {"checkpoint_every", c.checkpoint_every}, {"log_every", c.log_every},
          {"threads", c.threads}};
}

json to_json(const sampler::SamplerConfig& c) {
  return {{"order", c.order}, {"steps", c.steps}, {"seed", c.seed}, {"record_trajectory", c.record_trajectory}};
}

json to_json(const DataConfig& c) {
  return {{"root", c.root},
          {"family", c.family},
          {"n_pieces", c.n_pieces},
          {"train_count", c.train_count},
          {"test_count", c.test_count},
          {"grid_cell", c.grid_cell},
          {"synthetic",
           {{"points_per_shape", c.synthetic.points_per_shape},
            {"min_piece_points", c.synthetic.min_piece_points},
            {"max_piece_points", c.synthetic.max_piece_points},
            {"max_cut_attempts", c.synthetic.max_cut_attempts}}}};
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)}, {"train", to_json(c.train)}, {"sampler", to_json(c.sampler)},
          {"data", to_json(c.data)},   {"out", c.out},                {"checkpoint", c.checkpoint},
          {"threads", c.threads},      {"seed", c.seed}};
}

equinet::ModelConfig model_from_json(const json& j, equinet::ModelConfig c) {
  Reader(j, "model")
      .field("n_croco_blocks", c.n_croco_blocks)
      .field("n_downsample", c.n_downsample)
      .field("downsample_ratio", c.downsample_ratio)
      .field("k_neighbors", c.k_neighbors)
      .field("l_max", c.l_max)
      .field("channels", c.channels)
      .field("heads", c.heads)
      .field("radial_size", c.radial_size)
      .field("radial_cutoff", c.radial_cutoff)
      .field("time_frequencies", c.time_frequencies)
      .field("literal_elu", c.literal_elu);
  return c;
}

flowmatch::TrainConfig train_from_json(const json& j, flowmatch::TrainConfig c) {
  Reader(j, "train")
      .field("lr", c.lr)
      .field("schedule", c.schedule)
      .field("warmup_steps", c.warmup_steps)
      .field("weight_decay", c.weight_decay)
      .field("ema_decay", c.ema_decay)
      .field("batch_size", c.batch_size)
      .field("steps", c.steps)
      .field("omega", c.omega)
      .field("time_mean", c.time_mean)
      .field("time_std", c.time_std)
      .field("grad_clip", c.grad_clip)
      .field("rotation_weight", c.rotation_weight)
      .field("translation_weight", c.translation_weight)
      .field("seed", c.seed)
      .field("checkpoint_every", c.checkpoint_every)
      .field("log_every", c.log_every)
      .field("threads", c.threads);
  return c;
}

sampler::SamplerConfig sampler_from_json(const json& j, sampler::SamplerConfig c) {
  Reader(j, "sampler")
      .field("order", c.order)
      .field("steps", c.steps)
      .field("seed", c.seed)
      .field("record_trajectory", c.record_trajectory);
  return c;
}

DataConfig data_from_json(const json& j, DataConfig c) {
  Reader(j, "data")
      .field("root", c.root)
      .field("family", c.family)
      .field("n_pieces", c.n_pieces)
      .field("train_count", c.train_count)
      .field("test_count", c.test_count)
      .field("grid_cell", c.grid_cell)
      .section("synthetic", [&](const json& s) {
        Reader(s, "data.synthetic")
            .field("points_per_shape", c.synthetic.points_per_shape)
            .field("min_piece_points", c.synthetic.min_piece_points)
            .field("max_piece_points", c.synthetic.max_piece_points)
            .field("max_cut_attempts", c.synthetic.max_cut_attempts);
      });
  return c;
}

RunConfig run_from_json(const json& j, RunConfig c) {
  Reader(j, "config")
      .section("model", [&](const json& s) { c.model = model_from_json(s, c.model); })
      .section("train", [&](const json& s) { c.train = train_from_json(s, c.train); })
      .section("sampler", [&](const json& s) { c.sampler = sampler_from_json(s, c.sampler); })
      .section("data", [&](const json& s) { c.data = data_from_json(s, c.data); })
      .field("out", c.out)
      .field("checkpoint", c.checkpoint)
      .field("threads", c.threads)
      .field("seed", c.seed);
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  sampler.validate();
  (void)data::parse_family(data.family);
  if (data.n_pieces < 2 || data.n_pieces > 8) throw Error(Errc::InvalidConfig, "data.n_pieces must be in [2, 8]");
  if (data.grid_cell < 0) throw Error(Errc::InvalidConfig, "data.grid_cell must be non-negative");
  if (const std::size_t need = equinet::min_piece_points(model); data.synthetic.min_piece_points < need)
    throw Error(Errc::InvalidConfig, "data.synthetic.min_piece_points must be at least " + std::to_string(need) +
                                         " for this model (k_neighbors and downsampling levels)");
  if (data.n_pieces * data.synthetic.min_piece_points > data.synthetic.points_per_shape)
    throw Error(Errc::InvalidConfig, "data.synthetic.points_per_shape cannot hold n_pieces pieces of min_piece_points");
  if (threads < 1) throw Error(Errc::InvalidConfig, "threads must be at least 1");
  if (out.empty()) throw Error(Errc::InvalidConfig, "out must not be empty");
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? std::filesystem::path(out) / "checkpoint.bin" : std::filesystem::path(checkpoint);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  RunConfig c = run_from_json(j);
  c.validate();
  return c;
}

}  // namespace asmflow::app
