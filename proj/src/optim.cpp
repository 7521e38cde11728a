#include "feed/optim.hpp"

#include <cctype>
#include <charconv>
#include <string>

#include "feed/errors.hpp"

namespace feed {

Sgd::Sgd(std::vector<Tensor> params, float momentum, float weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  if (momentum < 0.0f || weight_decay < 0.0f) {
    throw ParameterError("sgd: momentum and weight decay must be non-negative");
  }
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.push_back(Vector::Zero(p.numel()));
}

void Sgd::step(float lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    Vector g = p.grad();
    if (weight_decay_ != 0.0f) g += weight_decay_ * p.data();
    if (momentum_ != 0.0f) {
      velocity_[i] = momentum_ * velocity_[i] + g;
      p.data() -= lr * velocity_[i];
    } else {
      p.data() -= lr * g;
    }
  }
}

void Sgd::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

LrSchedule::LrSchedule(float base, std::vector<std::pair<int, float>> milestones)
    : base_(base), milestones_(std::move(milestones)) {
  if (!(base >= 0.0f)) throw ParameterError("learning rate must be non-negative");
  int previous = -1;
  for (const auto& [epoch, factor] : milestones_) {
    if (epoch <= previous) {
      throw ParameterError("lr schedule epochs must be strictly increasing and non-negative");
    }
    if (!(factor >= 0.0f)) throw ParameterError("lr schedule factors must be non-negative");
    previous = epoch;
  }
}

float LrSchedule::at(int epoch) const {
  float lr = base_;
  for (const auto& [e, factor] : milestones_) {
    if (epoch >= e) lr *= factor;
  }
  return lr;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<std::pair<int, float>> LrSchedule::parse_milestones(std::string_view text) {
  std::vector<std::pair<int, float>> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("lr_schedule entry '" + std::string(item) + "' is not epoch:factor");
    }
    int epoch = 0;
    const auto e = trim(item.substr(0, colon));
    if (auto [ptr, ec] = std::from_chars(e.data(), e.data() + e.size(), epoch);
        ec != std::errc{} || ptr != e.data() + e.size()) {
      throw ConfigError("lr_schedule epoch '" + std::string(e) + "' is not an integer");
    }
    std::size_t used = 0;
    float factor = 0.0f;
    const std::string f(trim(item.substr(colon + 1)));
    try {
      factor = std::stof(f, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != f.size()) {
      throw ConfigError("lr_schedule factor '" + f + "' is not a number");
    }
    out.emplace_back(epoch, factor);
  }
  return out;
}

}  // namespace feed
