#include "feed/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "feed/errors.hpp"

namespace feed {
namespace {

struct Blob {
  float cy, cx, sigma;
  std::array<float, 3> color;
};

std::vector<Blob> random_blobs(Rng& rng, int count, float amplitude) {
  std::uniform_real_distribution<float> pos(0.1f, 0.9f);
  std::uniform_real_distribution<float> width(0.12f, 0.3f);
  std::uniform_real_distribution<float> tint(-amplitude, amplitude);
  std::vector<Blob> blobs(count);
  for (Blob& b : blobs) {
    b.cy = pos(rng);
    b.cx = pos(rng);
    b.sigma = width(rng);
    for (float& c : b.color) c = tint(rng);
  }
  return blobs;
}

void paint(std::vector<float>& image, int size, const std::vector<Blob>& blobs) {
  const auto plane = static_cast<std::size_t>(size) * size;
  for (const Blob& b : blobs) {
    const float inv = 1.0f / (2.0f * b.sigma * b.sigma);
    for (int y = 0; y < size; ++y) {
      const float dy = (static_cast<float>(y) + 0.5f) / static_cast<float>(size) - b.cy;
      for (int x = 0; x < size; ++x) {
        const float dx = (static_cast<float>(x) + 0.5f) / static_cast<float>(size) - b.cx;
        const float w = std::exp(-(dx * dx + dy * dy) * inv);
        for (int c = 0; c < 3; ++c) image[c * plane + y * size + x] += w * b.color[c];
      }
    }
  }
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw IoError(path.string() + ": truncated header at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Tensor Dataset::gather(std::span<const Index> rows) const {
  const Index d = image_numel();
  Vector out(static_cast<Index>(rows.size()) * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= count) {
      throw IndexError("dataset row " + std::to_string(rows[i]) + " outside [0, " +
                       std::to_string(count) + ")");
    }
    std::copy_n(pixels.data() + rows[i] * d, d, out.data() + static_cast<Index>(i) * d);
  }
  return Tensor(Shape{static_cast<Index>(rows.size()), channels, height, width}, std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const Index> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels.at(rows[i]);
  return out;
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "synthetic-blobs") return DatasetKind::SyntheticBlobs;
  if (name == "cifar10") return DatasetKind::Cifar10;
  if (name == "cifar100") return DatasetKind::Cifar100;
  if (name == "idx") return DatasetKind::Idx;
  throw ConfigError("unknown dataset '" + std::string(name) +
                    "' (valid: synthetic-blobs, cifar10, cifar100, idx)");
}

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::SyntheticBlobs: return "synthetic-blobs";
    case DatasetKind::Cifar10: return "cifar10";
    case DatasetKind::Cifar100: return "cifar100";
    case DatasetKind::Idx: return "idx";
  }
  return "?";
}

Dataset load_dataset(const DatasetSource& source) {
  switch (source.kind) {
    case DatasetKind::SyntheticBlobs:
      return make_synthetic_blobs(source.num_classes, source.samples_per_class, source.image_size,
                                  source.noise_sigma, source.seed, source.split);
    case DatasetKind::Cifar10: return load_cifar(source.path, 10, source.expected_count);
    case DatasetKind::Cifar100: return load_cifar(source.path, 100, source.expected_count);
    case DatasetKind::Idx: {
      Dataset d = load_idx(source.path, source.labels_path);
      if (source.expected_count > 0 && d.count != source.expected_count) {
        throw FormatError(source.path.string() + ": expected " +
                          std::to_string(source.expected_count) + " records, found " +
                          std::to_string(d.count));
      }
      return d;
    }
  }
  throw ConfigError("unsupported dataset kind");
}

Dataset make_synthetic_blobs(int num_classes, int samples_per_class, int image_size,
                             float noise_sigma, std::uint64_t seed, Split split) {
  if (num_classes < 1 || samples_per_class < 1 || image_size < 1) {
    throw ParameterError("synthetic-blobs: classes, samples and size must be positive");
  }
  if (!(noise_sigma >= 0.0f)) throw ParameterError("synthetic-blobs: noise_sigma must be >= 0");

  const std::uint64_t base = derive_seed(seed, stream::kData);
  const auto plane = static_cast<std::size_t>(image_size) * image_size;
  const std::size_t numel = 3 * plane;

  std::vector<float> background(numel, 0.5f);
  {
    Rng rng(derive_seed(base, 0));
    paint(background, image_size, random_blobs(rng, 4, 0.25f));
  }
  std::vector<std::vector<float>> templates(num_classes, background);
  for (int c = 0; c < num_classes; ++c) {
    Rng rng(derive_seed(base, 1 + static_cast<std::uint64_t>(c)));
    paint(templates[c], image_size, random_blobs(rng, 3, 0.4f));
  }

  Dataset d;
  d.count = static_cast<Index>(num_classes) * samples_per_class;
  d.height = d.width = image_size;
  d.num_classes = num_classes;
  d.pixels.resize(static_cast<std::size_t>(d.count) * numel);
  d.labels.resize(d.count);
  d.id = "synthetic-blobs(k=" + std::to_string(num_classes) + ",n=" +
         std::to_string(samples_per_class) + ",size=" + std::to_string(image_size) +
         ",seed=" + std::to_string(seed) + (split == Split::Train ? ",train)" : ",test)");

  Rng noise_rng(derive_seed(base, split == Split::Train ? 0x7261696eULL : 0x74657374ULL));
  std::normal_distribution<float> noise(0.0f, noise_sigma);
  for (Index i = 0; i < d.count; ++i) {
    const int label = static_cast<int>(i % num_classes);
    d.labels[i] = label;
    float* dst = d.pixels.data() + i * numel;
    const std::vector<float>& t = templates[label];
    for (std::size_t j = 0; j < numel; ++j) {
      const float v = noise_sigma > 0.0f ? t[j] + noise(noise_rng) : t[j];
      dst[j] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return d;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on " + path.string());
  return bytes;
}

Dataset load_cifar(const std::filesystem::path& path, int num_classes, Index expected_count) {
  if (num_classes != 10 && num_classes != 100) {
    throw ParameterError("cifar: num_classes must be 10 or 100");
  }
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  const std::size_t label_bytes = num_classes == 100 ? 2 : 1;
  const std::size_t record = label_bytes + 3072;
  if (bytes.size() % record != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % record;
    throw IoError(path.string() + ": truncated record at byte offset " + std::to_string(offset) +
                  " (" + std::to_string(bytes.size() - offset) + " of " + std::to_string(record) +
                  " bytes)");
  }
  Dataset d;
  d.count = static_cast<Index>(bytes.size() / record);
  if (expected_count > 0 && d.count != expected_count) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected_count) +
                      " records, found " + std::to_string(d.count));
  }
  d.height = d.width = 32;
  d.num_classes = num_classes;
  d.pixels.resize(static_cast<std::size_t>(d.count) * 3072);
  d.labels.resize(d.count);
  d.id = "cifar" + std::to_string(num_classes) + ":" + path.filename().string();
  for (Index i = 0; i < d.count; ++i) {
    const std::size_t at = static_cast<std::size_t>(i) * record;
    // CIFAR-100 stores coarse then fine; the fine label is the class.
    const int label = bytes[at + label_bytes - 1];
    if (label >= num_classes) {
      throw FormatError(path.string() + ": label " + std::to_string(label) + " at byte offset " +
                        std::to_string(at + label_bytes - 1));
    }
    d.labels[i] = label;
    const std::uint8_t* src = bytes.data() + at + label_bytes;
    float* dst = d.pixels.data() + i * 3072;
    for (int j = 0; j < 3072; ++j) dst[j] = static_cast<float>(src[j]) / 255.0f;
  }
  return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const std::vector<std::uint8_t> ib = read_file_bytes(images);
  const std::vector<std::uint8_t> lb = read_file_bytes(labels);
  const std::uint32_t imagic = read_be32(ib, 0, images);
  if (imagic != 0x00000803) {
    throw FormatError(images.string() + ": image magic " + std::to_string(imagic) +
                      " is not 0x00000803");
  }
  const std::uint32_t lmagic = read_be32(lb, 0, labels);
  if (lmagic != 0x00000801) {
    throw FormatError(labels.string() + ": label magic " + std::to_string(lmagic) +
                      " is not 0x00000801");
  }
  const std::uint32_t n = read_be32(ib, 4, images);
  const std::uint32_t rows = read_be32(ib, 8, images);
  const std::uint32_t cols = read_be32(ib, 12, images);
  const std::uint32_t ln = read_be32(lb, 4, labels);
  if (n != ln) {
    throw FormatError(images.string() + ": " + std::to_string(n) + " images but " +
                      std::to_string(ln) + " labels");
  }
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  const std::size_t need = 16 + static_cast<std::size_t>(n) * plane;
  if (ib.size() < need) {
    throw IoError(images.string() + ": truncated pixel data at byte offset " +
                  std::to_string(ib.size()) + " (need " + std::to_string(need) + ")");
  }
  if (lb.size() < 8 + static_cast<std::size_t>(n)) {
    throw IoError(labels.string() + ": truncated labels at byte offset " +
                  std::to_string(lb.size()));
  }
  Dataset d;
  d.count = n;
  d.height = rows;
  d.width = cols;
  d.pixels.resize(static_cast<std::size_t>(n) * 3 * plane);
  d.labels.resize(n);
  d.id = "idx:" + images.filename().string();
  int max_label = -1;
  for (std::uint32_t i = 0; i < n; ++i) {
    const int label = lb[8 + i];
    d.labels[i] = label;
    max_label = std::max(max_label, label);
    const std::uint8_t* src = ib.data() + 16 + i * plane;
    float* dst = d.pixels.data() + i * 3 * plane;
    for (std::size_t j = 0; j < plane; ++j) {
      const float v = static_cast<float>(src[j]) / 255.0f;
      dst[j] = dst[plane + j] = dst[2 * plane + j] = v;
    }
  }
  d.num_classes = max_label + 1;
  return d;
}

ChannelStats channel_stats(const Dataset& data) {
  ChannelStats s;
  if (data.channels != 3) throw DimensionError("channel_stats expects 3 channels");
  const auto plane = static_cast<std::size_t>(data.height * data.width);
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (Index i = 0; i < data.count; ++i) {
      const float* p = data.pixels.data() + (i * 3 + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum += p[j];
        sq += static_cast<double>(p[j]) * p[j];
      }
    }
    const double n = static_cast<double>(data.count) * plane;
    const double mean = n > 0 ? sum / n : 0.0;
    const double var = n > 0 ? std::max(0.0, sq / n - mean * mean) : 1.0;
    s.mean[c] = static_cast<float>(mean);
    s.stddev[c] = var > 1e-12 ? static_cast<float>(std::sqrt(var)) : 1.0f;
  }
  return s;
}

void normalize(Dataset& data, const ChannelStats& stats) {
  const auto plane = static_cast<std::size_t>(data.height * data.width);
  for (Index i = 0; i < data.count; ++i) {
    for (int c = 0; c < 3; ++c) {
      float* p = data.pixels.data() + (i * 3 + c) * plane;
      const float inv = 1.0f / stats.stddev[c];
      for (std::size_t j = 0; j < plane; ++j) p[j] = (p[j] - stats.mean[c]) * inv;
    }
  }
}

void augment_batch(Tensor& batch, Rng& rng, int pad) {
  if (batch.rank() != 4) throw DimensionError("augment_batch expects [N,C,H,W]");
  const Index n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::uniform_int_distribution<int> shift(-pad, pad);
  std::bernoulli_distribution flip(0.5);
  std::vector<float> src(static_cast<std::size_t>(c * h * w));
  float* data = batch.data().data();
  for (Index i = 0; i < n; ++i) {
    const int dy = shift(rng), dx = shift(rng);
    const bool mirror = flip(rng);
    float* img = data + i * c * h * w;
    std::copy_n(img, src.size(), src.data());
    for (Index ch = 0; ch < c; ++ch) {
      for (Index y = 0; y < h; ++y) {
        const Index sy = y + dy;
        for (Index x = 0; x < w; ++x) {
          const Index ox = mirror ? w - 1 - x : x;
          const Index sx = ox + dx;
          const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
          img[(ch * h + y) * w + x] = inside ? src[(ch * h + sy) * w + sx] : 0.0f;
        }
      }
    }
  }
}

}  // namespace feed
