#pragma once

#include <string_view>
#include <utility>
#include <vector>

#include "feed/tensor.hpp"

namespace feed {

// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
//   g += wd * p;  v = mu * v + g;  p -= lr * v
// Parameters without an accumulated gradient are left untouched.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, float momentum, float weight_decay);

  void step(float lr);
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Vector> velocity_;
  float momentum_;
  float weight_decay_;
};

// Piecewise-constant learning rate. Each milestone (epoch, factor) multiplies
// the rate from that zero-based epoch on; factors compound.
class LrSchedule {
 public:
  LrSchedule() = default;
  // ParameterError unless milestone epochs are strictly increasing and >= 0.
  LrSchedule(float base, std::vector<std::pair<int, float>> milestones);

  float at(int epoch) const;
  float base() const { return base_; }
  const std::vector<std::pair<int, float>>& milestones() const { return milestones_; }

  // "20:0.1,30:0.1"; an empty string gives no milestones. ConfigError on
  // malformed entries.
  static std::vector<std::pair<int, float>> parse_milestones(std::string_view text);

 private:
  float base_ = 0.1f;
  std::vector<std::pair<int, float>> milestones_;
};

}  // namespace feed
