#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "asmflow/commands.hpp"
#include "asmflow/error.hpp"
#include "asmflow/irreps.hpp"

namespace asmflow::app {

namespace {

constexpr int kTrials = 3;
constexpr std::size_t kPieces = 3;
constexpr std::size_t kSamplingSteps = 10;

double twist_rel_err(const lie::TwistN& a, const lie::TwistN& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max({num, (a[i].w - b[i].w).cwiseAbs().maxCoeff(), (a[i].t - b[i].t).cwiseAbs().maxCoeff()});
    den = std::max({den, b[i].w.cwiseAbs().maxCoeff(), b[i].t.cwiseAbs().maxCoeff()});
  }
  return num / std::max(den, 1e-300);
}

double pose_err(const lie::GroupElementN& a, const lie::GroupElementN& b) {
  double e = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    e = std::max({e, (a[i].r.matrix() - b[i].r.matrix()).cwiseAbs().maxCoeff(), (a[i].t - b[i].t).cwiseAbs().maxCoeff()});
  return e;
}

lie::TwistN rotate_twists(const lie::Rotation& r, lie::TwistN x) {
  for (auto& t : x.parts) {
    t.w = r * t.w;
    t.t = r * t.t;
  }
  return x;
}

PieceSet random_pieces(const equinet::ModelConfig& cfg, lie::Rng& rng) {
  std::normal_distribution<double> n01;
  const auto m = static_cast<Eigen::Index>(std::max<std::size_t>(48, equinet::min_piece_points(cfg)));
  PieceSet x;
  for (std::size_t i = 0; i < kPieces; ++i) {
    PointCloud p(3, m);
    for (Eigen::Index j = 0; j < m; ++j) p.col(j) = Eigen::Vector3d(0.5 * n01(rng), 0.3 * n01(rng), 0.8 * n01(rng));
    p.colwise() -= centroid(p);
    x.pieces.push_back(p);
  }
  return x;
}

PieceSet rotate_pieces(const PieceSet& x, const std::vector<lie::Rotation>& r) {
  PieceSet out;
  for (std::size_t i = 0; i < x.size(); ++i) out.pieces.push_back(r[i].matrix() * x.pieces[i]);
  return out;
}

PieceSet permute_pieces(const PieceSet& x, const std::vector<std::size_t>& sigma) {
  PieceSet out;
  for (auto s : sigma) out.pieces.push_back(x.pieces[s]);
  return out;
}

std::vector<lie::Rotation> haar_list(std::size_t n, lie::Rng& rng) {
  std::vector<lie::Rotation> r;
  for (std::size_t i = 0; i < n; ++i) r.push_back(lie::haar_rotation(rng));
  return r;
}

std::vector<lie::Rotation> inverses(const std::vector<lie::Rotation>& r) {
  std::vector<lie::Rotation> out;
  for (const auto& x : r) out.push_back(x.inverse());
  return out;
}

struct Recorder {
  std::vector<CheckResult>& out;
  std::ostream* progress;

  void operator()(std::string suite, std::string name, double value, double tol) {
    const bool ok = std::isfinite(value) && value <= tol;
    out.push_back({std::move(suite), std::move(name), value, tol, ok});
    if (progress) *progress << (ok ? "PASS " : "FAIL ") << out.back().suite << '/' << out.back().name << "  " << value
                            << " (tol " << tol << ")\n";
  }
};

void check_lie(Recorder& rec, lie::Rng& rng) {
  std::normal_distribution<double> n01;
  double so3 = 0, se3 = 0;
  for (int k = 0; k < 1000; ++k) {
    Eigen::Vector3d w(n01(rng), n01(rng), n01(rng));
    w *= std::uniform_real_distribution<double>(0.0, 3.0)(rng) / std::max(w.norm(), 1e-12);
    so3 = std::max(so3, (lie::so3_log(lie::so3_exp(w)) - w).norm());
    const lie::Twist x{w, Eigen::Vector3d(n01(rng), n01(rng), n01(rng))};
    const auto y = lie::se3_log(lie::se3_exp(x));
    se3 = std::max(se3, std::max((y.w - x.w).norm(), (y.t - x.t).norm()));
  }
  rec("lie", "so3 log(exp(w)) = w", so3, 1e-9);
  rec("lie", "se3 log(exp(x)) = x", se3, 1e-9);
}

void check_correction(Recorder& rec, lie::Rng& rng) {
  double exact = 0, excess = 0;
  for (int k = 0; k < 20; ++k) {
    const auto g0 = lie::sample_noise(kPieces, {}, rng);
    const auto r = lie::haar_rotation(rng);
    const auto found = lie::rotation_correction(g0, lie::left_rotate(r.inverse(), g0));
    exact = std::max(exact, (found.matrix() - r.matrix()).cwiseAbs().maxCoeff());
    const auto g1 = lie::sample_noise(kPieces, {}, rng);
    const double best = lie::correction_objective(lie::rotation_correction(g0, g1), g0, g1);
    for (int s = 0; s < 200; ++s)
      excess = std::max(excess, best - lie::correction_objective(lie::haar_rotation(rng), g0, g1, 1.0));
  }
  rec("correction", "recovers an exact rotation", exact, 1e-9);
  rec("correction", "no random rotation does better", excess, 1e-9);
}

void check_network(Recorder& rec, const equinet::ModelConfig& cfg, const equinet::VectorField& field, lie::Rng& rng) {
  double perm = 0, right = 0, left = 0;
  for (int t = 0; t < kTrials; ++t) {
    const PieceSet x = random_pieces(cfg, rng);
    const auto g = lie::sample_noise(kPieces, {}, rng);
    const double tau = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto base = field(x, equinet::PieceGraph::build(x, cfg), g, tau);

    std::vector<std::size_t> sigma(kPieces);
    std::iota(sigma.begin(), sigma.end(), 0);
    std::shuffle(sigma.begin(), sigma.end(), rng);
    const PieceSet xs = permute_pieces(x, sigma);
    perm = std::max(perm, twist_rel_err(field(xs, equinet::PieceGraph::build(xs, cfg), lie::permute(g, sigma), tau),
                                        lie::permute(base, sigma)));

    const auto r = haar_list(kPieces, rng);
    const PieceSet xr = rotate_pieces(x, r);
    right = std::max(right, twist_rel_err(field(xr, equinet::PieceGraph::build(xr, cfg),
                                                lie::right_rotate(g, inverses(r)), tau),
                                          base));

    const auto q = lie::haar_rotation(rng);
    left = std::max(left, twist_rel_err(field(x, equinet::PieceGraph::build(x, cfg), lie::left_rotate(q, g), tau),
                                        rotate_twists(q, base)));
  }
  rec("equivariance", "piece permutation", perm, 1e-5);
  rec("equivariance", "piece-frame rotation", right, 1e-5);
  rec("equivariance", "global rotation", left, 1e-5);
}

void check_sampling(Recorder& rec, const equinet::ModelConfig& cfg, const equinet::VectorField& field, lie::Rng& rng) {
  const sampler::SamplerConfig sc{4, kSamplingSteps};
  const PieceSet x = random_pieces(cfg, rng);
  const auto g0 = lie::sample_noise(kPieces, {}, rng);
  const auto base = sampler::sample_from(field, x, g0, sc).final;

  const auto r = haar_list(kPieces, rng);
  const auto rinv = inverses(r);
  const auto right = sampler::sample_from(field, rotate_pieces(x, r), lie::right_rotate(g0, rinv), sc).final;
  rec("relatedness", "piece-frame rotation", pose_err(right, lie::right_rotate(base, rinv)), 1e-4);

  std::vector<std::size_t> sigma(kPieces);
  std::iota(sigma.begin(), sigma.end(), 0);
  std::rotate(sigma.begin(), sigma.begin() + 1, sigma.end());
  const auto perm = sampler::sample_from(field, permute_pieces(x, sigma), lie::permute(g0, sigma), sc).final;
  rec("relatedness", "piece permutation", pose_err(perm, lie::permute(base, sigma)), 1e-4);

  const auto q = lie::haar_rotation(rng);
  const auto left = sampler::sample_from(field, x, lie::left_rotate(q, g0), sc).final;
  rec("relatedness", "global rotation", pose_err(left, lie::left_rotate(q, base)), 1e-4);
}

void check_loss(Recorder& rec, const equinet::ModelConfig& cfg, const equinet::ParamStore& params, lie::Rng& rng) {
  const equinet::Network<double> net(cfg, params);
  const auto loss = [&](const PieceSet& x, const lie::GroupElementN& g0, const lie::GroupElementN& g1, double tau) {
    const auto s = flowmatch::build_sample(x, g0, g1, tau);
    return flowmatch::sample_loss(net.forward(s.x, s.h_tau, s.tau), s.xi, {}).item();
  };
  double right = 0, perm = 0, left = 0;
  for (int t = 0; t < kTrials; ++t) {
    const PieceSet x = random_pieces(cfg, rng);
    const auto g0 = lie::sample_noise(kPieces, {}, rng);
    const auto g1 = lie::sample_noise(kPieces, {}, rng);
    const double tau = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const double base = loss(x, g0, g1, tau);
    const double scale = std::max(std::abs(base), 1.0);

    const auto r = haar_list(kPieces, rng);
    const auto rinv = inverses(r);
    right = std::max(right,
                     std::abs(loss(rotate_pieces(x, r), lie::right_rotate(g0, rinv), lie::right_rotate(g1, rinv), tau) -
                              base) / scale);

    std::vector<std::size_t> sigma(kPieces);
    std::iota(sigma.begin(), sigma.end(), 0);
    std::shuffle(sigma.begin(), sigma.end(), rng);
    perm = std::max(perm, std::abs(loss(permute_pieces(x, sigma), lie::permute(g0, sigma), lie::permute(g1, sigma), tau) -
                                   base) / scale);

    const auto q = lie::haar_rotation(rng);
    left = std::max(left, std::abs(loss(x, lie::left_rotate(q, g0), lie::left_rotate(q, g1), tau) - base) / scale);
  }
  rec("loss", "piece-frame rotation", right, 1e-6);
  rec("loss", "piece permutation", perm, 1e-6);
  rec("loss", "global rotation", left, 1e-6);
}

void check_messages(Recorder& rec, const equinet::ModelConfig& cfg) {
  const auto b = bench_messages(500, cfg.l_max, cfg.channels, 1, 7);
  rec("messages", "so2-reduced equals tensor product", b.max_diff, 1e-6);
}

void check_integrator(Recorder& rec, lie::Rng& rng) {
  const auto g0 = lie::sample_noise(kPieces, {}, rng);
  lie::TwistN xi = lie::TwistN::zero(kPieces);
  std::normal_distribution<double> n01;
  for (auto& t : xi.parts) t = {Eigen::Vector3d(n01(rng), n01(rng), n01(rng)), Eigen::Vector3d(n01(rng), n01(rng), n01(rng))};
  const sampler::Field constant = [&](const lie::GroupElementN&, double) { return xi; };
  const auto exact = lie::advance(g0, xi, 1.0);
  double err = 0;
  for (int order : {1, 4})
    err = std::max(err, pose_err(sampler::integrate(constant, g0, {order, 7}).final, exact));
  rec("integrator", "constant field is integrated exactly", err, 1e-9);
}

}  // namespace

std::vector<CheckResult> run_checks(const equinet::ModelConfig& model, std::uint64_t seed, std::ostream* progress) {
  model.validate();
  std::vector<CheckResult> out;
  Recorder rec{out, progress};
  lie::Rng rng(seed);
  const auto params = equinet::init_params(model, rng);
  const equinet::VectorField field(model, params);
  check_lie(rec, rng);
  check_correction(rec, rng);
  check_network(rec, model, field, rng);
  check_sampling(rec, model, field, rng);
  check_loss(rec, model, params, rng);
  check_messages(rec, model);
  check_integrator(rec, rng);
  return out;
}

}  // namespace asmflow::app
