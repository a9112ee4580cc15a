#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tie/tensor.hpp"

namespace tie {

// Trainable tensor plus its Adam state. step_count is per parameter and
// drives the bias correction.
struct Parameter {
  Tensor value;
  std::vector<double> m, v;
  std::int64_t step_count = 0;

  explicit Parameter(Tensor t) : value(std::move(t)) {
    value.set_requires_grad(true);
    m.assign(value.size(), 0.0);
    v.assign(value.size(), 0.0);
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update over the given parameters. Every parameter must carry a
// gradient (a step without gradients is a caller bug, not a no-op); the
// gradients are consumed and zeroed afterwards.
inline void adam_step(const std::vector<Parameter*>& params,
                      const AdamConfig& cfg) {
  for (Parameter* p : params)
    if (p->value.grad().empty())
      tensor_fail("adam_step: parameter of shape " +
                  shape_str(p->value.shape()) + " has no gradient");
  for (Parameter* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    std::vector<double>& w = p->value.data();
    const std::vector<double>& g = p->value.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      p->m[i] = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g[i];
      p->v[i] = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = p->m[i] / bc1;
      const double vhat = p->v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p->value.zero_grad();
  }
}

inline void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->value.zero_grad();
}

// RAII freeze: clears requires_grad on the given parameters so no gradients
// accumulate into them, restoring the previous flags on destruction.
class FreezeGuard {
 public:
  explicit FreezeGuard(const std::vector<Parameter*>& params) {
    saved_.reserve(params.size());
    for (Parameter* p : params) {
      saved_.emplace_back(p, p->value.requires_grad());
      p->value.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (auto& [p, flag] : saved_) p->value.set_requires_grad(flag);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<Parameter*, bool>> saved_;
};

}  // namespace tie
