#include "asmflow/sampler.hpp"

#include <ostream>

#include "asmflow/error.hpp"
#include "json.hpp"

namespace asmflow::sampler {

void SamplerConfig::validate() const {
  if (order != 1 && order != 4) throw Error(Errc::InvalidConfig, "order must be 1 or 4");
  if (steps < 1) throw Error(Errc::InvalidConfig, "steps must be at least 1");
}

lie::GroupElementN rk1_step(const Field& f, const lie::GroupElementN& g, double tau, double eta) {
  return lie::advance(g, f(g, tau), eta);
}

lie::GroupElementN rk4_step(const Field& f, const lie::GroupElementN& g, double tau, double eta) {
  const lie::TwistN k1 = f(g, tau);
  const lie::TwistN k2 = f(lie::advance(g, k1, eta / 2), tau + eta / 2);
  const lie::TwistN k3 = f(lie::advance(g, k2, eta / 2), tau + eta / 2);
  const lie::TwistN k4 = f(lie::advance(g, k3, eta), tau + eta);
  lie::GroupElementN out = lie::advance(g, k1, eta / 6);
  out = lie::advance(out, k2, eta / 3);
  out = lie::advance(out, k3, eta / 3);
  return lie::advance(out, k4, eta / 6);
}

Trajectory integrate(const Field& f, const lie::GroupElementN& g0, const SamplerConfig& cfg) {
  cfg.validate();
  Trajectory tr;
  const double eta = 1.0 / static_cast<double>(cfg.steps);
  lie::GroupElementN g = g0;
  if (cfg.record_trajectory) tr.states.push_back({0.0, g});
  for (std::size_t i = 0; i < cfg.steps; ++i) {
    const double tau = static_cast<double>(i) * eta;
    g = cfg.order == 1 ? rk1_step(f, g, tau, eta) : rk4_step(f, g, tau, eta);
    tr.field_evals += static_cast<std::size_t>(cfg.order);
    if (cfg.record_trajectory) tr.states.push_back({static_cast<double>(i + 1) * eta, g});
  }
  tr.final = std::move(g);
  return tr;
}

lie::GroupElementN recenter(const PieceSet& x, const lie::GroupElementN& g) {
  if (x.size() != g.size()) throw Error(Errc::LengthMismatch, "pose count differs from piece count");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) mean += g[i] * centroid(x.pieces[i]);
  mean /= static_cast<double>(x.size());
  lie::GroupElementN out = g;
  for (auto& p : out.parts) p.t -= mean;
  return out;
}

Trajectory sample_from(const equinet::VectorField& field, const PieceSet& x, const lie::GroupElementN& g0,
                       const SamplerConfig& cfg) {
  const auto pg = equinet::PieceGraph::build(x, field.config());
  const Field f = [&](const lie::GroupElementN& g, double tau) { return field(x, pg, g, tau); };
  Trajectory tr = integrate(f, g0, cfg);
  tr.final = recenter(x, tr.final);
  return tr;
}

Trajectory sample(const equinet::VectorField& field, const PieceSet& x, const SamplerConfig& cfg, lie::Rng& rng,
                  double omega) {
  return sample_from(field, x, lie::sample_noise(x.size(), {omega}, rng), cfg);
}

void write_trajectory(std::ostream& out, const Trajectory& tr) {
  for (std::size_t s = 0; s < tr.states.size(); ++s) {
    nlohmann::json j;
    j["step"] = s;
    j["tau"] = tr.states[s].tau;
    j["poses"] = nlohmann::json::array();
    for (const auto& p : tr.states[s].g.parts) {
      const Eigen::Quaterniond q = p.r.quaternion();
      j["poses"].push_back({{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", {p.t.x(), p.t.y(), p.t.z()}}});
    }
    out << j.dump() << '\n';
  }
}

}  // namespace asmflow::sampler
