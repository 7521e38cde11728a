#include "feed/nn.hpp"

#include <charconv>
#include <cmath>
#include <optional>

#include "feed/errors.hpp"

namespace feed {

namespace {

Tensor normal_tensor(Shape shape, float stddev, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  Vector v(shape.numel());
  for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

std::vector<Tensor> Network::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(parameters_.size());
  for (const auto& p : parameters_) out.push_back(p.tensor);
  return out;
}

std::vector<NamedTensor> Network::state() const {
  std::vector<NamedTensor> out = parameters_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

void Network::load_state(const std::vector<NamedTensor>& entries) {
  std::vector<NamedTensor> mine = state();
  if (entries.size() != mine.size()) {
    // Report the first name that differs to point at the offending tensor.
    for (std::size_t i = 0; i < std::min(entries.size(), mine.size()); ++i) {
      if (entries[i].name != mine[i].name) {
        throw DimensionError("state mismatch at tensor '" + entries[i].name + "' (expected '" +
                             mine[i].name + "')");
      }
    }
    const std::string& name =
        entries.size() > mine.size() ? entries[mine.size()].name : mine[entries.size()].name;
    throw DimensionError("state mismatch at tensor '" + name + "': " +
                         std::to_string(entries.size()) + " entries vs " +
                         std::to_string(mine.size()) + " expected");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != mine[i].name || entries[i].tensor.shape() != mine[i].tensor.shape()) {
      throw DimensionError("state mismatch at tensor '" + entries[i].name + "' " +
                           entries[i].tensor.shape().str() + " (expected '" + mine[i].name +
                           "' " + mine[i].tensor.shape().str() + ")");
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    mine[i].tensor.data() = entries[i].tensor.data();
  }
}

void Network::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : parameters_) p.tensor.set_requires_grad(!frozen);
}

void Network::zero_grad() {
  for (auto& p : parameters_) p.tensor.zero_grad();
}

Tensor Network::add_parameter(std::string name, Tensor value) {
  value.set_requires_grad(!frozen_);
  parameters_.push_back({std::move(name), value});
  return value;
}

Tensor Network::add_buffer(std::string name, Tensor value) {
  buffers_.push_back({std::move(name), value});
  return value;
}

Index count_params(const Network& net) {
  Index total = 0;
  for (const auto& p : net.parameters()) total += p.tensor.numel();
  return total;
}

Conv2d::Conv2d(Network& owner, const std::string& name, Index in, Index out, Index kernel,
               int stride_, int padding_, bool with_bias, Rng& rng)
    : stride(stride_), padding(padding_) {
  const float stddev = std::sqrt(2.0f / static_cast<float>(in * kernel * kernel));
  weight = owner.add_parameter(name + ".weight", normal_tensor(Shape{out, in, kernel, kernel}, stddev, rng));
  if (with_bias) bias = owner.add_parameter(name + ".bias", Tensor::zeros(Shape{out}));
}

BatchNorm2d::BatchNorm2d(Network& owner, const std::string& name, Index channels) {
  gamma = owner.add_parameter(name + ".gamma", Tensor::ones(Shape{channels}));
  beta = owner.add_parameter(name + ".beta", Tensor::zeros(Shape{channels}));
  running_mean = owner.add_buffer(name + ".running_mean", Tensor::zeros(Shape{channels}));
  running_var = owner.add_buffer(name + ".running_var", Tensor::ones(Shape{channels}));
}

Tensor BatchNorm2d::operator()(const Tensor& x, Mode mode) {
  return batch_norm(x, gamma, beta, running_mean.data(), running_var.data(), mode, momentum, eps);
}

Linear::Linear(Network& owner, const std::string& name, Index in, Index out, Rng& rng) {
  const float stddev = std::sqrt(1.0f / static_cast<float>(in));
  weight = owner.add_parameter(name + ".weight", normal_tensor(Shape{out, in}, stddev, rng));
  bias = owner.add_parameter(name + ".bias", Tensor::zeros(Shape{out}));
}

std::string ArchDescriptor::str() const {
  return "resnet" + std::to_string(depth) + "-c" + std::to_string(num_classes);
}

ArchDescriptor ArchDescriptor::parse(std::string_view text) {
  auto fail = [&] { return VersionError("unknown architecture descriptor '" + std::string(text) + "'"); };
  constexpr std::string_view prefix = "resnet";
  if (!text.starts_with(prefix)) throw fail();
  const auto dash = text.find("-c");
  if (dash == std::string_view::npos) throw fail();
  ArchDescriptor arch;
  const auto depth_part = text.substr(prefix.size(), dash - prefix.size());
  const auto class_part = text.substr(dash + 2);
  auto parse_int = [&](std::string_view s, int& out) {
    if (s.empty()) throw fail();
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw fail();
  };
  parse_int(depth_part, arch.depth);
  parse_int(class_part, arch.num_classes);
  if (arch.depth < 8 || (arch.depth - 2) % 6 != 0 || arch.num_classes < 1) throw fail();
  return arch;
}

const Tensor& ForwardOutput::tap(std::string_view name) const {
  if (name == "final") return final_map;
  for (const auto& [group, t] : groups) {
    if (group == name) return t;
  }
  throw IndexError("no tap named '" + std::string(name) + "'");
}

std::vector<std::string> ForwardOutput::tap_names() const {
  std::vector<std::string> names;
  for (const auto& g : groups) names.push_back(g.first);
  names.emplace_back("final");
  return names;
}

ResNet::ResNet(ArchDescriptor arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
  if (arch.depth < 8 || (arch.depth - 2) % 6 != 0) {
    throw ParameterError("resnet depth must satisfy depth = 6n+2 with n >= 1, got " +
                         std::to_string(arch.depth));
  }
  if (arch.num_classes < 1) throw ParameterError("num_classes must be positive");
  Rng rng(derive_seed(seed, stream::kInit));
  const int blocks = (arch.depth - 2) / 6;
  constexpr Index widths[3] = {16, 32, 64};

  stem_ = Conv2d(*this, "stem.conv", 3, widths[0], 3, 1, 1, false, rng);
  stem_bn_ = BatchNorm2d(*this, "stem.bn", widths[0]);
  Index in = widths[0];
  for (int s = 0; s < 3; ++s) {
    std::vector<Block> stage;
    for (int b = 0; b < blocks; ++b) {
      const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      Block blk;
      blk.conv1 = Conv2d(*this, prefix + ".conv1", in, widths[s], 3, stride, 1, false, rng);
      blk.bn1 = BatchNorm2d(*this, prefix + ".bn1", widths[s]);
      blk.conv2 = Conv2d(*this, prefix + ".conv2", widths[s], widths[s], 3, 1, 1, false, rng);
      blk.bn2 = BatchNorm2d(*this, prefix + ".bn2", widths[s]);
      blk.out_channels = widths[s];
      blk.stride = stride;
      stage.push_back(std::move(blk));
      in = widths[s];
    }
    stages_.push_back(std::move(stage));
  }
  fc_ = Linear(*this, "fc", widths[2], arch.num_classes, rng);
}

ForwardOutput ResNet::forward_with_taps(const Tensor& batch, Mode mode) {
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) < 4 || batch.dim(3) < 4 ||
      batch.dim(2) % 4 != 0 || batch.dim(3) % 4 != 0) {
    throw DimensionError("resnet expects [N,3,H,W] with H and W positive multiples of 4, got " +
                         batch.shape().str());
  }
  std::optional<NoGradGuard> guard;
  if (frozen()) guard.emplace();

  ForwardOutput out;
  Tensor x = relu(stem_bn_(stem_(batch), mode));
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (Block& blk : stages_[s]) {
      Tensor y = relu(blk.bn1(blk.conv1(x), mode));
      y = blk.bn2(blk.conv2(y), mode);
      Tensor shortcut = blk.stride == 1 && blk.out_channels == x.dim(1)
                            ? x
                            : shortcut_pad(x, blk.out_channels, blk.stride);
      x = relu(add(y, shortcut));
    }
    out.groups.emplace_back("stage" + std::to_string(s + 1), x);
  }
  out.final_map = x;
  out.logits = fc_(global_avg_pool(x));
  return out;
}

std::unique_ptr<ResNet> build_resnet(int depth, int num_classes, std::uint64_t seed) {
  return std::make_unique<ResNet>(ArchDescriptor{depth, num_classes}, seed);
}

std::unique_ptr<ResNet> build_resnet(const ArchDescriptor& arch, std::uint64_t seed) {
  return std::make_unique<ResNet>(arch, seed);
}

ForwardOutput forward_with_taps(ResNet& net, const Tensor& batch, Mode mode) {
  return net.forward_with_taps(batch, mode);
}

Ntl::Ntl(Index channels, std::uint64_t seed, NtlStyle style) : channels_(channels), style_(style) {
  if (channels < 1) throw ParameterError("NTL channels must be >= 1");
  Rng rng(derive_seed(seed, stream::kInit));
  for (int i = 0; i < kConvCount; ++i) {
    const std::string name = "ntl.conv" + std::to_string(i + 1);
    conv_[i] = Conv2d(*this, name, channels, channels, 3, 1, 1, true, rng);
    if (style == NtlStyle::BnRelu && i + 1 < kConvCount) {
      bn_[i] = BatchNorm2d(*this, "ntl.bn" + std::to_string(i + 1), channels);
    }
  }
}

Tensor Ntl::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    throw DimensionError("NTL with " + std::to_string(channels_) + " channels got input " +
                         x.shape().str());
  }
  std::optional<NoGradGuard> guard;
  if (frozen()) guard.emplace();
  Tensor y = x;
  for (int i = 0; i < kConvCount; ++i) {
    y = conv_[i](y);
    if (style_ == NtlStyle::BnRelu && i + 1 < kConvCount) y = relu(bn_[i](y, mode));
  }
  return y;
}

std::unique_ptr<Ntl> build_ntl(Index channels, std::uint64_t seed, NtlStyle style) {
  return std::make_unique<Ntl>(channels, seed, style);
}

}  // namespace feed
