#pragma once

#include <cstdint>
#include <memory>

#include "feed/nn.hpp"

namespace feed {

// Factor channel count round(rate * channels); ParameterError when it is 0 or
// the rate is outside (0, 1].
Index factor_channels(Index channels, double rate);

// Convolutional autoencoder over feature maps.
//
// Encoder: conv3x3(C->C)+BN+ReLU, conv3x3(C->z)+BN+ReLU, the output being the
// factor. Decoder mirrors it: conv3x3(z->C)+BN+ReLU, conv3x3(C->C) with a
// linear output so reconstructions are not clipped. Stride 1 throughout, so
// the transposed convolutions of the mirror reduce to ordinary 3x3 ones.
class Paraphraser : public Network {
 public:
  Paraphraser(Index channels, double rate, std::uint64_t seed);

  Tensor encode(const Tensor& x, Mode mode);
  Tensor decode(const Tensor& factor, Mode mode);
  Tensor forward(const Tensor& x, Mode mode) override { return decode(encode(x, mode), mode); }

  Index channels() const { return channels_; }
  Index factor_channels() const { return factor_; }
  double rate() const { return rate_; }

 private:
  Index channels_;
  Index factor_;
  double rate_;
  Conv2d enc1_, enc2_, dec1_, dec2_;
  BatchNorm2d enc_bn1_, enc_bn2_, dec_bn1_;
};

// Maps student features into the paraphraser's factor space:
// conv3x3(C->C)+BN+ReLU, conv3x3(C->z)+BN+ReLU.
class Translator : public Network {
 public:
  Translator(Index channels, Index factor_channels, std::uint64_t seed);

  Tensor forward(const Tensor& x, Mode mode) override;

 private:
  Conv2d conv1_, conv2_;
  BatchNorm2d bn1_, bn2_;
};

std::unique_ptr<Paraphraser> build_paraphraser(Index channels, double rate, std::uint64_t seed);
std::unique_ptr<Translator> build_translator(Index channels, Index factor_channels,
                                             std::uint64_t seed);

}  // namespace feed
