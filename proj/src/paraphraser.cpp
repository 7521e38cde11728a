#include "feed/paraphraser.hpp"

#include <cmath>
#include <optional>

#include "feed/errors.hpp"

namespace feed {

Index factor_channels(Index channels, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) {
    throw ParameterError("paraphraser rate must lie in (0, 1], got " + std::to_string(rate));
  }
  const auto z = static_cast<Index>(std::lround(rate * static_cast<double>(channels)));
  if (z < 1) {
    throw ParameterError("paraphraser rate " + std::to_string(rate) + " on " +
                         std::to_string(channels) + " channels leaves no factor channels");
  }
  return z;
}

Paraphraser::Paraphraser(Index channels, double rate, std::uint64_t seed)
    : channels_(channels), factor_(feed::factor_channels(channels, rate)), rate_(rate) {
  Rng rng(derive_seed(seed, stream::kInit));
  enc1_ = Conv2d(*this, "encoder.conv1", channels_, channels_, 3, 1, 1, true, rng);
  enc_bn1_ = BatchNorm2d(*this, "encoder.bn1", channels_);
  enc2_ = Conv2d(*this, "encoder.conv2", channels_, factor_, 3, 1, 1, true, rng);
  enc_bn2_ = BatchNorm2d(*this, "encoder.bn2", factor_);
  dec1_ = Conv2d(*this, "decoder.conv1", factor_, channels_, 3, 1, 1, true, rng);
  dec_bn1_ = BatchNorm2d(*this, "decoder.bn1", channels_);
  dec2_ = Conv2d(*this, "decoder.conv2", channels_, channels_, 3, 1, 1, true, rng);
}

Tensor Paraphraser::encode(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    throw DimensionError("paraphraser over " + std::to_string(channels_) + " channels got " +
                         x.shape().str());
  }
  std::optional<NoGradGuard> guard;
  if (frozen()) guard.emplace();
  Tensor h = relu(enc_bn1_(enc1_(x), mode));
  return relu(enc_bn2_(enc2_(h), mode));
}

Tensor Paraphraser::decode(const Tensor& factor, Mode mode) {
  if (factor.rank() != 4 || factor.dim(1) != factor_) {
    throw DimensionError("paraphraser decoder expects " + std::to_string(factor_) +
                         " factor channels, got " + factor.shape().str());
  }
  std::optional<NoGradGuard> guard;
  if (frozen()) guard.emplace();
  Tensor h = relu(dec_bn1_(dec1_(factor), mode));
  return dec2_(h);
}

Translator::Translator(Index channels, Index factor_channels, std::uint64_t seed) {
  if (channels < 1 || factor_channels < 1) throw ParameterError("translator channels must be >= 1");
  Rng rng(derive_seed(seed, stream::kInit));
  conv1_ = Conv2d(*this, "translator.conv1", channels, channels, 3, 1, 1, true, rng);
  bn1_ = BatchNorm2d(*this, "translator.bn1", channels);
  conv2_ = Conv2d(*this, "translator.conv2", channels, factor_channels, 3, 1, 1, true, rng);
  bn2_ = BatchNorm2d(*this, "translator.bn2", factor_channels);
}

Tensor Translator::forward(const Tensor& x, Mode mode) {
  std::optional<NoGradGuard> guard;
  if (frozen()) guard.emplace();
  return relu(bn2_(conv2_(relu(bn1_(conv1_(x), mode))), mode));
}

std::unique_ptr<Paraphraser> build_paraphraser(Index channels, double rate, std::uint64_t seed) {
  return std::make_unique<Paraphraser>(channels, rate, seed);
}

std::unique_ptr<Translator> build_translator(Index channels, Index factor_channels,
                                             std::uint64_t seed) {
  return std::make_unique<Translator>(channels, factor_channels, seed);
}

}  // namespace feed
