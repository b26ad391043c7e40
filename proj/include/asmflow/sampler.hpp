#pragma once

// Integration of the learned field from noise to an assembly with
// Lie-group Euler (RK1) and four-stage (RK4) steps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "asmflow/lie.hpp"
#include "asmflow/model.hpp"
#include "asmflow/pieces.hpp"

namespace asmflow::sampler {

/// Right-trivialized velocity f_tau(g).
using Field = std::function<lie::TwistN(const lie::GroupElementN& g, double tau)>;

struct SamplerConfig {
  int order = 4;
  std::size_t steps = 10;
  std::uint64_t seed = 0;
  bool record_trajectory = false;

  /// Throws InvalidConfig unless order is 1 or 4 and steps >= 1.
  void validate() const;
  bool operator==(const SamplerConfig&) const = default;
};

/// g' = exp(eta f_tau(g)) g.
lie::GroupElementN rk1_step(const Field& f, const lie::GroupElementN& g, double tau, double eta);

/// k1 = f_tau(g), k2 = f_{tau+eta/2}(exp(eta/2 k1) g),
/// k3 = f_{tau+eta/2}(exp(eta/2 k2) g), k4 = f_{tau+eta}(exp(eta k3) g),
/// g' = exp(eta/6 k4) exp(eta/3 k3) exp(eta/3 k2) exp(eta/6 k1) g.
lie::GroupElementN rk4_step(const Field& f, const lie::GroupElementN& g, double tau, double eta);

struct State {
  double tau;
  lie::GroupElementN g;
};

struct Trajectory {
  lie::GroupElementN final;
  std::vector<State> states;  // including tau = 0 when recorded
  std::size_t field_evals = 0;
};

/// Integrates from g0 at tau = 0 to tau = 1 with eta = 1 / steps.
Trajectory integrate(const Field& f, const lie::GroupElementN& g0, const SamplerConfig& cfg);

/// Shifts all translations so that the piece centroids of g X sum to zero.
lie::GroupElementN recenter(const PieceSet& x, const lie::GroupElementN& g);

/// Integrates the network field for pieces x from the given noise and
/// re-centers the result.
Trajectory sample_from(const equinet::VectorField& field, const PieceSet& x, const lie::GroupElementN& g0,
                       const SamplerConfig& cfg);

/// As sample_from with g0 drawn from the noise distribution.
Trajectory sample(const equinet::VectorField& field, const PieceSet& x, const SamplerConfig& cfg, lie::Rng& rng,
                  double omega = 1.0);

/// One JSON line per recorded state: step, tau and the poses as
/// quaternion (w, x, y, z) plus translation.
void write_trajectory(std::ostream& out, const Trajectory& tr);

}  // namespace asmflow::sampler
