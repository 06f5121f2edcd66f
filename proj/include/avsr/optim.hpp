// avsr/optim.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// AdamW with decoupled weight decay, and the warmup-then-cosine learning
// rate schedule. The optimizer only ever sees the parameter list it was
// constructed with; anything outside that list keeps no optimizer state.

#ifndef AVSR_OPTIM_HPP_
#define AVSR_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "avsr/autodiff.hpp"
#include "avsr/error.hpp"
#include "avsr/tensor.hpp"

namespace avsr {

// linear warmup from 0 to peak over warmup_steps, then cosine decay to 0
// at total_steps; defined on 0 <= step <= total_steps
inline double LrAt(int64_t step, int64_t total_steps, int64_t warmup_steps,
                   double peak) {
  Require(total_steps >= 1, "step-out-of-range", "schedule needs >= 1 step");
  Require(warmup_steps >= 0 && warmup_steps <= total_steps,
          "step-out-of-range", "warmup must fit inside the schedule");
  Require(step >= 0 && step <= total_steps, "step-out-of-range",
          "step outside the schedule");
  if (warmup_steps > 0 && step <= warmup_steps)
    return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step == total_steps) return 0.0;
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(total_steps - warmup_steps);
  return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

class AdamW {
 public:
  AdamW(std::vector<ParamPtr> params, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)),
        weight_decay_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const ParamPtr& p : params_) {
      m_.push_back(Tensor::Zeros(p->value.shape));
      v_.push_back(Tensor::Zeros(p->value.shape));
    }
  }

  // reads accumulated grads; decay is decoupled from the moment estimates
  void Step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      if (p.grad.numel() == 0) p.grad = Tensor::Zeros(p.value.shape);
      Require(p.grad.shape == p.value.shape, "shape-mismatch",
              "gradient shape drifted for " + p.name);
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (int64_t j = 0; j < p.value.numel(); ++j) {
        double g = p.grad[j];
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        p.value[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) +
                            weight_decay_ * p.value[j]);
      }
    }
  }

  void ZeroGrads() {
    for (const ParamPtr& p : params_) p->ZeroGrad();
  }

  int64_t steps_taken() const { return t_; }
  const std::vector<ParamPtr>& params() const { return params_; }
  bool Tracks(const ParamPtr& p) const {
    for (const ParamPtr& q : params_)
      if (q == p) return true;
    return false;
  }

 private:
  std::vector<ParamPtr> params_;
  double weight_decay_, beta1_, beta2_, eps_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace avsr

#endif  // AVSR_OPTIM_HPP_
