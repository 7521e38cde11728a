#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "feed/data.hpp"
#include "feed/errors.hpp"

using namespace feed;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("feedkit_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

// CIFAR-10 style records: label byte, 3072 pixel bytes.
std::vector<std::uint8_t> cifar_records(int n) {
  std::vector<std::uint8_t> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(static_cast<std::uint8_t>(i % 10));
    for (int j = 0; j < 3072; ++j) out.push_back(static_cast<std::uint8_t>((i + j) % 256));
  }
  return out;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("synthetic blobs are balanced and deterministic") {
    const Dataset a = make_synthetic_blobs(4, 32, 8, 0.55f, 7, Split::Train);
    const Dataset b = make_synthetic_blobs(4, 32, 8, 0.55f, 7, Split::Train);
    CHECK(a.count == 128);
    CHECK(a.pixels == b.pixels);
    CHECK(a.labels == b.labels);
    std::vector<int> per(4, 0);
    for (int y : a.labels) ++per[y];
    for (int c : per) CHECK(c == 32);
    for (float v : a.pixels) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    const Dataset test = make_synthetic_blobs(4, 32, 8, 0.55f, 7, Split::Test);
    CHECK(test.pixels != a.pixels);
    CHECK(make_synthetic_blobs(4, 32, 8, 0.55f, 8, Split::Train).pixels != a.pixels);
  }

  TEST_CASE("class templates are shared across splits") {
    // Noise-free splits differ only through noise, so at sigma 0 they agree.
    const Dataset a = make_synthetic_blobs(3, 2, 8, 0.0f, 5, Split::Train);
    const Dataset b = make_synthetic_blobs(3, 2, 8, 0.0f, 5, Split::Test);
    CHECK(a.pixels == b.pixels);
  }

  TEST_CASE("gather copies rows") {
    const Dataset d = make_synthetic_blobs(2, 3, 4, 0.1f, 1, Split::Train);
    const std::vector<Index> rows{4, 1};
    const Tensor t = d.gather(rows);
    CHECK(t.shape() == Shape{2, 3, 4, 4});
    CHECK(t.data()[0] == d.pixels[4 * 48]);
    CHECK(d.gather_labels(rows) == std::vector<int>{d.labels[4], d.labels[1]});
  }

  TEST_CASE("cifar loader and truncation") {
    const fs::path dir = scratch_dir("cifar");
    auto bytes = cifar_records(3);
    write_bytes(dir / "ok.bin", bytes);
    const Dataset d = load_cifar(dir / "ok.bin", 10);
    CHECK(d.count == 3);
    CHECK(d.image_numel() == 3072);
    CHECK(d.labels == std::vector<int>{0, 1, 2});
    CHECK(d.pixels[1] == doctest::Approx(1.0f / 255.0f));
    CHECK_THROWS_AS(load_cifar(dir / "ok.bin", 10, 4), FormatError);

    bytes.resize(bytes.size() - 100);
    write_bytes(dir / "short.bin", bytes);
    try {
      load_cifar(dir / "short.bin", 10);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
    CHECK_THROWS_AS(load_cifar(dir / "missing.bin", 10), IoError);

    auto bad = cifar_records(1);
    bad[0] = 42;
    write_bytes(dir / "label.bin", bad);
    CHECK_THROWS_AS(load_cifar(dir / "label.bin", 10), FormatError);
  }

  TEST_CASE("idx round trip") {
    const fs::path dir = scratch_dir("idx");
    std::vector<std::uint8_t> images, labels;
    put_be32(images, 0x00000803);
    put_be32(images, 2);
    put_be32(images, 4);
    put_be32(images, 4);
    for (int i = 0; i < 32; ++i) images.push_back(static_cast<std::uint8_t>(i * 8));
    put_be32(labels, 0x00000801);
    put_be32(labels, 2);
    labels.push_back(1);
    labels.push_back(3);
    write_bytes(dir / "img.idx", images);
    write_bytes(dir / "lbl.idx", labels);
    const Dataset d = load_idx(dir / "img.idx", dir / "lbl.idx");
    CHECK(d.count == 2);
    CHECK(d.height == 4);
    CHECK(d.width == 4);
    CHECK(d.channels == 3);
    CHECK(d.num_classes == 4);
    // Greyscale is replicated into every channel.
    CHECK(d.pixels[16] == d.pixels[0]);
    CHECK(d.pixels[48 + 1] == doctest::Approx(136.0f / 255.0f));

    images[3] = 0x04;
    write_bytes(dir / "bad.idx", images);
    CHECK_THROWS_AS(load_idx(dir / "bad.idx", dir / "lbl.idx"), FormatError);
  }

  TEST_CASE("normalization gives zero mean and unit deviation") {
    Dataset d = make_synthetic_blobs(3, 10, 8, 0.3f, 2, Split::Train);
    const ChannelStats s = channel_stats(d);
    normalize(d, s);
    const ChannelStats after = channel_stats(d);
    for (int c = 0; c < 3; ++c) {
      CHECK(after.mean[c] == doctest::Approx(0.0).epsilon(1e-4).scale(1.0));
      CHECK(after.stddev[c] == doctest::Approx(1.0).epsilon(1e-3));
    }
  }

  TEST_CASE("augmentation keeps shape and is seeded") {
    const Dataset d = make_synthetic_blobs(2, 4, 8, 0.3f, 3, Split::Train);
    const std::vector<Index> rows{0, 1, 2, 3};
    Tensor a = d.gather(rows), b = d.gather(rows);
    Rng r1(9), r2(9);
    augment_batch(a, r1);
    augment_batch(b, r2);
    CHECK(a.shape() == Shape{4, 3, 8, 8});
    CHECK(a.data() == b.data());
  }

  TEST_CASE("dataset kind names") {
    for (auto k : {DatasetKind::SyntheticBlobs, DatasetKind::Cifar10, DatasetKind::Cifar100,
                   DatasetKind::Idx}) {
      CHECK(parse_dataset_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_dataset_kind("imagenet"), ConfigError);
  }
}
