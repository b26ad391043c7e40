#include <cmath>

#include "asmflow/error.hpp"
#include "asmflow/flowmatch.hpp"

namespace asmflow::flowmatch {

void AdamW::step(std::vector<float>& params, const std::vector<double>& grad) {
  if (grad.size() != params.size()) throw Error(Errc::ShapeMismatch, "gradient size differs from parameters");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0f);
    v_.assign(params.size(), 0.0f);
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double m = b1 * m_[i] + (1 - b1) * g;
    const double v = b2 * v_[i] + (1 - b2) * g * g;
    m_[i] = static_cast<float>(m);
    v_[i] = static_cast<float>(v);
    const double p = params[i];
    const double update = (m / c1) / (std::sqrt(v / c2) + cfg_.eps) + cfg_.weight_decay * p;
    params[i] = static_cast<float>(p - cfg_.lr * update);
  }
}

void AdamW::restore(std::uint64_t t, std::vector<float> m, std::vector<float> v) {
  if (m.size() != v.size()) throw Error(Errc::ShapeMismatch, "optimizer moments differ in size");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void ema_update(std::vector<float>& shadow, const std::vector<float>& params, double decay) {
  if (shadow.size() != params.size()) throw Error(Errc::ShapeMismatch, "EMA shadow size differs from parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    shadow[i] = static_cast<float>(decay * shadow[i] + (1.0 - decay) * params[i]);
}

double clip_grad_norm(std::vector<double>& grad, double max_norm) {
  double s = 0;
  for (double g : grad) s += g * g;
  const double norm = std::sqrt(s);
  if (max_norm > 0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (double& g : grad) g *= f;
  }
  return norm;
}

}  // namespace asmflow::flowmatch
