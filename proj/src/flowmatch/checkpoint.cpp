#include <bit>
#include <cstring>
#include <fstream>

#include "asmflow/config.hpp"
#include "asmflow/error.hpp"
#include "asmflow/flowmatch.hpp"

namespace asmflow::flowmatch {

namespace {

constexpr char kMagic[] = "ASMFLOW-CKPT 1\n";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

std::vector<float> get_floats(std::istream& in, std::size_t n) {
  std::vector<unsigned char> raw(4 * n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t u = raw[4 * i] | (raw[4 * i + 1] << 8) | (raw[4 * i + 2] << 16) |
                            (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  using app::json;
  json arrays = json::array();
  std::vector<const std::vector<float>*> blobs;
  for (const auto& e : ck.params.entries()) {
    arrays.push_back({{"name", e.name}, {"shape", e.shape}});
    blobs.push_back(&e.data);
  }
  const std::size_t total = ck.params.total_size();
  auto extra = [&](const char* name, const std::vector<float>& v) {
    if (v.empty()) return;
    if (v.size() != total) throw Error(Errc::ShapeMismatch, std::string(name) + " has the wrong size");
    arrays.push_back({{"name", name}, {"shape", {v.size()}}});
    blobs.push_back(&v);
  };
  extra("ema", ck.ema);
  extra("adam_m", ck.adam_m);
  extra("adam_v", ck.adam_v);
  const json header = {{"format", "asmflow checkpoint"},
                       {"model", app::to_json(ck.model)},
                       {"train", app::to_json(ck.train)},
                       {"step", ck.step},
                       {"arrays", arrays}};
  const std::string text = header.dump(1);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic - 1);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* b : blobs) put_floats(out, *b);
    if (!out) throw Error(Errc::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open checkpoint " + path.string());
  char magic[sizeof kMagic - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error(Errc::ParseError, path.string() + " is not a checkpoint");
  const std::uint64_t len = get_u64(in);
  if (!in || len > (1u << 28)) throw Error(Errc::ParseError, path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  Checkpoint ck;
  try {
    const auto header = app::json::parse(text);
    ck.model = app::model_from_json(header.at("model"));
    ck.train = app::train_from_json(header.at("train"));
    ck.step = header.at("step").get<std::uint64_t>();
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto shape = a.at("shape").get<tensor::Shape>();
      auto data = get_floats(in, tensor::numel(shape));
      if (!in) throw Error(Errc::ParseError, path.string() + ": truncated array " + name);
      if (name == "ema") ck.ema = std::move(data);
      else if (name == "adam_m") ck.adam_m = std::move(data);
      else if (name == "adam_v") ck.adam_v = std::move(data);
      else ck.params.add(name, shape).data = std::move(data);
    }
  } catch (const app::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  // Validates names and shapes against the model.
  (void)equinet::Network<float>(ck.model, ck.params);
  return ck;
}

equinet::ParamStore inference_params(const Checkpoint& ck) {
  equinet::ParamStore ps = ck.params;
  if (!ck.ema.empty()) ps.assign(ck.ema);
  return ps;
}

}  // namespace asmflow::flowmatch
