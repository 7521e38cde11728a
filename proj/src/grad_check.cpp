#include "feed/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "feed/errors.hpp"

namespace feed {

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, float h) {
  if (!(h > 0.0f)) throw ParameterError("grad_check: step must be positive");
  std::vector<bool> restore(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].is_leaf()) throw ContractError("grad_check: inputs must be leaf tensors");
    restore[k] = inputs[k].requires_grad();
    inputs[k].set_requires_grad(true);
    inputs[k].zero_grad();
  }

  const Tensor loss = f();
  if (loss.numel() != 1) {
    throw ContractError("grad_check: f must be scalar-valued, got " + loss.shape().str());
  }
  backward(loss);

  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& x = inputs[k];
    const Vector analytic = x.has_grad() ? x.grad() : Vector::Zero(x.numel());
    for (Index i = 0; i < x.numel(); ++i) {
      const float saved = x.data()[i];
      auto probe = [&](float value, const char* side) {
        x.data()[i] = value;
        const float out = f().item();
        if (!std::isfinite(out)) {
          x.data()[i] = saved;
          throw NumericError("grad_check: non-finite value at input " + std::to_string(k) +
                             " coordinate " + std::to_string(i) + " (" + side + " probe)");
        }
        return out;
      };
      // Divide by the step actually taken after rounding, not the nominal 2h.
      const float hi = saved + h, lo = saved - h;
      const float up = probe(hi, "+h");
      const float down = probe(lo, "-h");
      x.data()[i] = saved;
      const double numeric = (static_cast<double>(up) - down) / (static_cast<double>(hi) - lo);
      const double a = analytic[i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    inputs[k].zero_grad();
    inputs[k].set_requires_grad(restore[k]);
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, float h) {
  return grad_check([&] { return f(x); }, {x}, h);
}

}  // namespace feed
