#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "feed/random.hpp"
#include "feed/tensor.hpp"

namespace feed {

// In-memory image classification set, NCHW float pixels.
struct Dataset {
  Index count = 0;
  Index channels = 3;
  Index height = 0;
  Index width = 0;
  int num_classes = 0;
  std::vector<float> pixels;
  std::vector<int> labels;
  std::string id;  // human-readable provenance, carried into reports

  Index image_numel() const { return channels * height * width; }
  Tensor gather(std::span<const Index> rows) const;
  std::vector<int> gather_labels(std::span<const Index> rows) const;
};

enum class DatasetKind { SyntheticBlobs, Cifar10, Cifar100, Idx };
enum class Split { Train, Test };

// "synthetic-blobs", "cifar10", "cifar100", "idx".
DatasetKind parse_dataset_kind(std::string_view name);
std::string_view to_string(DatasetKind kind);

struct DatasetSource {
  DatasetKind kind = DatasetKind::SyntheticBlobs;
  Split split = Split::Train;

  // File-backed kinds. For IDX, `path` holds images and `labels_path` labels.
  std::filesystem::path path;
  std::filesystem::path labels_path;
  Index expected_count = 0;  // 0 accepts any record count

  // Synthetic generator.
  int num_classes = 10;
  int samples_per_class = 200;
  int image_size = 32;
  float noise_sigma = 0.55f;
  std::uint64_t seed = 0;
};

// Pixels in [0, 1]. IoError for missing or truncated files (with the byte
// offset); FormatError for bad headers, labels or record counts.
Dataset load_dataset(const DatasetSource& source);

// Per class a smooth random template of Gaussian blobs on a shared
// background, plus i.i.d. Gaussian pixel noise, clamped to [0, 1]. Templates
// depend only on the seed; the two splits draw independent noise. Labels
// cycle through the classes so every prefix is near balanced.
Dataset make_synthetic_blobs(int num_classes, int samples_per_class, int image_size,
                             float noise_sigma, std::uint64_t seed, Split split);

Dataset load_cifar(const std::filesystem::path& path, int num_classes, Index expected_count = 0);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct ChannelStats {
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
  std::array<float, 3> stddev{1.0f, 1.0f, 1.0f};
};

ChannelStats channel_stats(const Dataset& data);
// x <- (x - mean) / stddev per channel.
void normalize(Dataset& data, const ChannelStats& stats);

// Zero-pad by `pad`, take a random crop back to the original size and flip
// horizontally with probability 1/2, independently per image. In place.
void augment_batch(Tensor& batch, Rng& rng, int pad = 4);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace feed
