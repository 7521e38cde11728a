#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "feed/cli.hpp"
#include "feed/config.hpp"
#include "feed/errors.hpp"

using namespace feed;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("feedkit_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> small(const fs::path& dir, std::vector<std::string> extra) {
  std::vector<std::string> args{"image_size=8",   "num_classes=4", "samples_per_class=8",
                                "test_samples_per_class=4", "arch=resnet8-c4", "epochs=1",
                                "batch_size=16",  "out_dir=" + dir.string()};
  args.insert(args.begin(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown keys and subcommands are config errors") {
    const Result r = run({"train-scratch", "learning_rate=0.1"});
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("learning_rate") != std::string::npos);
    CHECK(r.err.find("batch_size") != std::string::npos);
    CHECK(run({"fly"}).code == kExitConfig);
    CHECK(run({}).code == kExitConfig);
    CHECK(run({"train-scratch", "epochs=zero"}).code == kExitConfig);
  }

  TEST_CASE("config files and overrides") {
    const fs::path dir = scratch_dir("cli_cfg");
    {
      std::ofstream f(dir / "run.cfg");
      f << "# comment\n\nepochs = 3\nlr=0.2\n";
    }
    Config c;
    c.load_file(dir / "run.cfg");
    c.apply_override("--lr=0.05");
    CHECK(c.integer("epochs", 0) == 3);
    CHECK(c.real("lr", 0.0) == doctest::Approx(0.05));
    CHECK(c.list("teachers").empty());
    c.set("teachers", "a.ckpt,,b.ckpt");
    CHECK(c.list("teachers") == std::vector<std::string>{"a.ckpt", "b.ckpt"});
    CHECK_THROWS_AS(c.set("nope", "1"), ConfigError);
  }

  TEST_CASE("train, evaluate and analyze end to end") {
    const fs::path dir = scratch_dir("cli_run");
    Result r = run(small(dir, {"train-scratch", "run_id=a", "seed=1"}));
    REQUIRE(r.code == kExitOk);
    CHECK(fs::exists(dir / "a.ckpt"));
    CHECK(fs::exists(dir / "a.csv"));

    r = run(small(dir, {"evaluate", "ckpt=" + (dir / "a.ckpt").string()}));
    REQUIRE(r.code == kExitOk);
    CHECK(std::regex_match(r.out, std::regex("test_error=[0-9]+\\.[0-9]+%\n")));

    r = run(small(dir, {"analyze-recon", "ckpt=" + (dir / "a.ckpt").string(), "recon_epochs=2"}));
    REQUIRE(r.code == kExitOk);
    CHECK(fs::exists(dir / "a_recon.csv"));
    CHECK(r.out.find("final_mse=") != std::string::npos);

    run(small(dir, {"train-scratch", "run_id=b", "seed=2"}));
    r = run(small(dir, {"pfeed", "run_id=p", "teachers=" + (dir / "a.ckpt").string() + "," +
                                                 (dir / "b.ckpt").string()}));
    CHECK(r.code == kExitOk);
    r = run(small(dir, {"distill", "run_id=k", "method=kd", "teachers=" + (dir / "a.ckpt").string()}));
    CHECK(r.code == kExitOk);
  }

  TEST_CASE("missing teachers are named") {
    const fs::path dir = scratch_dir("cli_missing");
    const std::string gone = (dir / "gone.ckpt").string();
    Result r = run(small(dir, {"pfeed", "teachers=" + gone + "," + gone}));
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find(gone) != std::string::npos);
    r = run(small(dir, {"distill", "method=kd"}));
    CHECK(r.code == kExitConfig);
  }

  TEST_CASE("sfeed writes one checkpoint and csv per stack") {
    const fs::path dir = scratch_dir("cli_sfeed");
    const Result r = run(small(dir, {"sfeed", "run_id=s", "stacks=3"}));
    REQUIRE(r.code == kExitOk);
    for (int i = 1; i <= 3; ++i) {
      CHECK(fs::exists(dir / ("s_stack" + std::to_string(i) + ".ckpt")));
      CHECK(fs::exists(dir / ("s_stack" + std::to_string(i) + ".csv")));
    }
  }

  TEST_CASE("runtime failures exit with 2") {
    const fs::path dir = scratch_dir("cli_bad");
    {
      std::ofstream f(dir / "junk.ckpt");
      f << "not a checkpoint";
    }
    const Result r = run(small(dir, {"evaluate", "ckpt=" + (dir / "junk.ckpt").string()}));
    CHECK(r.code == kExitRuntime);
    CHECK_FALSE(r.err.empty());
  }

  TEST_CASE("the output directory can come from the environment") {
    const fs::path dir = scratch_dir("cli_env");
    Config c;
    c.set("out_dir", "/elsewhere");
    ::setenv("FEEDKIT_OUT", dir.string().c_str(), 1);
    const TrainConfig t = train_config_from(c);
    ::unsetenv("FEEDKIT_OUT");
    CHECK(t.out_dir == dir);
    CHECK(train_config_from(c).out_dir == fs::path("/elsewhere"));
  }
}
