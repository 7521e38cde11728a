#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "feed/ops.hpp"
#include "feed/random.hpp"
#include "feed/tensor.hpp"

namespace feed {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// A parameterized differentiable map with a stable, named parameter set.
//
// Parameters are trainable tensors; buffers are non-trainable state that
// still round-trips through checkpoints (batch-norm running statistics).
class Network {
 public:
  virtual ~Network() = default;
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;

  const std::vector<NamedTensor>& parameters() const { return parameters_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  std::vector<Tensor> parameter_tensors() const;

  // Parameters followed by buffers, in registration order.
  std::vector<NamedTensor> state() const;
  // Copies values by name. Throws DimensionError naming the first tensor
  // whose name or shape does not match.
  void load_state(const std::vector<NamedTensor>& entries);
  void copy_state_from(const Network& other) { load_state(other.state()); }

  // A frozen network exposes no trainable parameters to autodiff.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  void zero_grad();

 protected:
  Tensor add_parameter(std::string name, Tensor value);
  Tensor add_buffer(std::string name, Tensor value);

 private:
  std::vector<NamedTensor> parameters_;
  std::vector<NamedTensor> buffers_;
  bool frozen_ = false;

  friend class Conv2d;
  friend class BatchNorm2d;
  friend class Linear;
};

// Trainable element count (batch-norm running stats excluded).
Index count_params(const Network& net);

class Conv2d {
 public:
  Conv2d() = default;
  // Fan-in scaled normal init, zero bias.
  Conv2d(Network& owner, const std::string& name, Index in, Index out, Index kernel, int stride,
         int padding, bool with_bias, Rng& rng);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

  Tensor weight;
  Tensor bias;  // numel 0 without bias
  int stride = 1;
  int padding = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(Network& owner, const std::string& name, Index channels);

  Tensor operator()(const Tensor& x, Mode mode);

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;
};

class Linear {
 public:
  Linear() = default;
  Linear(Network& owner, const std::string& name, Index in, Index out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }

  Tensor weight, bias;
};

// "resnet<depth>-c<classes>", e.g. "resnet56-c100".
struct ArchDescriptor {
  int depth = 20;
  int num_classes = 10;

  std::string str() const;
  // Throws VersionError on strings that name no known architecture.
  static ArchDescriptor parse(std::string_view text);
  bool operator==(const ArchDescriptor&) const = default;
};

// Logits plus the tapped feature maps of one forward pass.
struct ForwardOutput {
  Tensor logits;
  // Per-stage outputs in network order ("stage1", "stage2", "stage3").
  std::vector<std::pair<std::string, Tensor>> groups;
  // Last convolutional feature map before global pooling.
  Tensor final_map;

  // Group name or "final"; throws IndexError otherwise.
  const Tensor& tap(std::string_view name) const;
  std::vector<std::string> tap_names() const;
};

// CIFAR-style 6n+2 residual network: a 3x3 stem, three stages of n basic
// blocks at widths 16/32/64 (stride-2 transitions with parameter-free
// padded shortcuts), global average pooling and an affine classifier.
class ResNet : public Network {
 public:
  ResNet(ArchDescriptor arch, std::uint64_t seed);

  ForwardOutput forward_with_taps(const Tensor& batch, Mode mode);
  Tensor forward(const Tensor& x, Mode mode) override { return forward_with_taps(x, mode).logits; }

  const ArchDescriptor& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  Index final_channels() const { return 64; }

 private:
  struct Block {
    Conv2d conv1;
    BatchNorm2d bn1;
    Conv2d conv2;
    BatchNorm2d bn2;
    Index out_channels;
    int stride;
  };

  ArchDescriptor arch_;
  std::uint64_t seed_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  std::vector<std::vector<Block>> stages_;
  Linear fc_;
};

std::unique_ptr<ResNet> build_resnet(int depth, int num_classes, std::uint64_t seed);
std::unique_ptr<ResNet> build_resnet(const ArchDescriptor& arch, std::uint64_t seed);

// Throws DimensionError when the spatial size is not a positive multiple of 4
// or the input is not 3-channel.
ForwardOutput forward_with_taps(ResNet& net, const Tensor& batch, Mode mode);

enum class NtlStyle { BnRelu, Plain };

// Nonlinear transformation layer: three channel-preserving 3x3 convolutions.
// BnRelu puts batch norm + ReLU after the first two; Plain has neither.
class Ntl : public Network {
 public:
  Ntl(Index channels, std::uint64_t seed, NtlStyle style = NtlStyle::BnRelu);

  Tensor forward(const Tensor& x, Mode mode) override;

  Index channels() const { return channels_; }
  NtlStyle style() const { return style_; }
  static constexpr int kConvCount = 3;

 private:
  Index channels_;
  NtlStyle style_;
  Conv2d conv_[kConvCount];
  BatchNorm2d bn_[kConvCount - 1];
};

std::unique_ptr<Ntl> build_ntl(Index channels, std::uint64_t seed,
                               NtlStyle style = NtlStyle::BnRelu);

}  // namespace feed
