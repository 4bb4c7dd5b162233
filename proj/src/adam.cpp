#include "gatenet/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace gatenet {

void Adam::step(std::span<Parameter* const> params) {
  bool any = false;
  for (const Parameter* p : params) any = any || (p->trainable && p->has_grad);
  if (!any) throw std::logic_error("adam step: no trainable parameter has a recorded gradient");

  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (Parameter* p : params) {
    if (!p->trainable || !p->has_grad) continue;
    Moments& m = moments_[p];
    if (m.first.size() != p->value.size()) {
      m.first.assign(p->value.size(), 0.0);
      m.second.assign(p->value.size(), 0.0);
    }
    auto w = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m.first[i] = options_.beta1 * m.first[i] + (1.0 - options_.beta1) * gi;
      m.second[i] = options_.beta2 * m.second[i] + (1.0 - options_.beta2) * gi * gi;
      const double update = (m.first[i] / c1) / (std::sqrt(m.second[i] / c2) + options_.eps);
      w[i] = static_cast<float>(static_cast<double>(w[i]) - options_.lr * update);
    }
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace gatenet
