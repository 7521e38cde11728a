#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "feed/data.hpp"
#include "feed/nn.hpp"
#include "feed/paraphraser.hpp"

namespace feed {

struct ReconConfig {
  double rate = 0.5;
  int epochs = 10;
  int batch_size = 64;
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
  std::uint64_t seed = 0;
  std::string tap = "final";

  std::string describe() const;
  bool operator==(const ReconConfig&) const = default;
};

struct ReconReport {
  std::string checkpoint_id;
  std::string source_id;  // dataset the features came from
  ReconConfig config;
  Index feature_channels = 0;
  // Per-epoch averages over the training pass. eq4_sum is the batch mean of
  // the squared error summed over a sample's elements; mse_per_element
  // divides it by the element count.
  std::vector<double> mse_per_element;
  std::vector<double> eq4_sum;

  double final_value() const { return mse_per_element.empty() ? 0.0 : mse_per_element.back(); }
  void write_csv(const std::filesystem::path& path) const;
};

// Eval-mode forward of a frozen copy of the source; the network itself is
// left untouched.
Tensor extract_features(ResNet& net, const Dataset& data, std::string_view tap = "final",
                        int batch_size = 256);

// Minimizes the per-element reconstruction MSE by SGD. NumericError naming
// the learning rate when the loss diverges.
ReconReport train_paraphraser(Paraphraser& paraphraser, const Tensor& features,
                              const ReconConfig& config);

// Loads the checkpoint, extracts features of `data` and trains a fresh
// paraphraser seeded from the config.
ReconReport analyze_recon(const std::filesystem::path& checkpoint, const Dataset& data,
                          const ReconConfig& config);

struct ReconSummary {
  std::vector<std::pair<std::string, double>> finals;  // checkpoint id, final mse
  std::string str() const;
};

// Side-by-side final values. ComparabilityError unless every report shares
// the paraphraser config, feature source and channel count.
ReconSummary compare_recon(std::span<const ReconReport> reports);

}  // namespace feed
