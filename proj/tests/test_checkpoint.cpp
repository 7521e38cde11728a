#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "feed/checkpoint.hpp"
#include "feed/data.hpp"
#include "feed/errors.hpp"
#include "support/gen.hpp"

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

CheckpointMeta meta_for(const ResNet& net) {
  CheckpointMeta m;
  m.arch = net.arch().str();
  m.stack = 2;
  m.seed = net.seed();
  m.extra["run_id"] = "unit";
  return m;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a({}) == 0xcbf29ce484222325ULL);
    const std::vector<std::uint8_t> a{'a'};
    CHECK(fnv1a(a) == 0xaf63dc4c8601ec8cULL);
    const std::string s = "foobar";
    const std::vector<std::uint8_t> fb(s.begin(), s.end());
    CHECK(fnv1a(fb) == 0x85944171f73967e8ULL);
  }

  TEST_CASE("save, load, save is byte identical") {
    const fs::path dir = scratch_dir("ckpt");
    gen::Gen g(41);
    for (int i = 0; i < 4; ++i) {
      auto net = build_resnet(8, 4 + i, 100 + i);
      g.perturb(*net);
      save_checkpoint(*net, meta_for(*net), dir / "a.ckpt");
      LoadedCheckpoint back = load_checkpoint(dir / "a.ckpt");
      CHECK(back.meta.stack == 2);
      CHECK(back.meta.arch == net->arch().str());
      CHECK(back.meta.extra.at("run_id") == "unit");
      save_checkpoint(*back.net, back.meta, dir / "b.ckpt");
      CHECK(read_file_bytes(dir / "a.ckpt") == read_file_bytes(dir / "b.ckpt"));
      CHECK(checkpoint_hash(dir / "a.ckpt") == back.hash);
      const auto s1 = net->state(), s2 = back.net->state();
      REQUIRE(s1.size() == s2.size());
      for (std::size_t k = 0; k < s1.size(); ++k) {
        CHECK(s1[k].name == s2[k].name);
        CHECK(s1[k].tensor.data() == s2[k].tensor.data());
      }
    }
    CHECK_FALSE(fs::exists(dir / "a.ckpt.tmp"));
  }

  TEST_CASE("stored names and shapes cover the whole state") {
    auto net = build_resnet(8, 10, 3);
    const auto bytes = encode_checkpoint(net->state(), meta_for(*net));
    const CheckpointFile f = decode_checkpoint(bytes);
    std::set<std::string> names;
    for (const auto& e : f.tensors) names.insert(e.name);
    CHECK(names.size() == net->state().size());
    CHECK(names.count("fc.weight") == 1);
    CHECK(names.count("stem.bn.running_mean") == 1);
  }

  TEST_CASE("corruption, version and structure errors") {
    auto net = build_resnet(8, 10, 4);
    const auto good = encode_checkpoint(net->state(), meta_for(*net));
    auto flipped = good;
    flipped[flipped.size() / 2] ^= 0x01;
    CHECK_THROWS_AS(decode_checkpoint(flipped), CorruptionError);

    auto version = good;
    version[8] = 9;
    CHECK_THROWS_AS(decode_checkpoint(version), VersionError);

    auto magic = good;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(magic), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(std::span(good.data(), 10)), FormatError);
  }

  TEST_CASE("unknown architecture is a version error") {
    const fs::path dir = scratch_dir("ckpt_arch");
    auto net = build_resnet(8, 10, 5);
    CheckpointMeta m = meta_for(*net);
    m.arch = "vgg16-c10";
    write_bytes(dir / "x.ckpt", encode_checkpoint(net->state(), m));
    CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), VersionError);
  }

  TEST_CASE("loading into a different architecture names the tensor") {
    auto a = build_resnet(8, 10, 6);
    auto b = build_resnet(8, 100, 6);
    const CheckpointFile f = decode_checkpoint(encode_checkpoint(a->state(), meta_for(*a)));
    try {
      b->load_state(f.tensors);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("fc.weight") != std::string::npos);
    }
  }
}
