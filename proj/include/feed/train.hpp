#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "feed/data.hpp"
#include "feed/losses.hpp"
#include "feed/nn.hpp"

namespace feed {

struct DistillSpec {
  LossMethod method = LossMethod::CE;
  std::vector<std::filesystem::path> teachers;
  KdParams kd;
  FeatureLossParams feature;
  KdEnsemble kd_ensemble = KdEnsemble::Prob;
  NtlStyle ntl_style = NtlStyle::BnRelu;
  // FT only: paraphraser compression rate, pre-training length as a fraction
  // of `epochs`, and its learning rate.
  double paraphraser_rate = 0.5;
  double ft_pretrain_fraction = 0.25;
  float paraphraser_lr = 0.01f;
};

struct TrainConfig {
  std::string run_id = "run";
  ArchDescriptor arch;
  int epochs = 40;
  int batch_size = 128;
  float lr = 0.1f;
  std::vector<std::pair<int, float>> lr_schedule{{20, 0.1f}, {30, 0.1f}};
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  std::uint64_t seed = 0;
  bool augment = false;
  bool parallel_teachers = false;
  // false gives every NTL the same initialization.
  bool distinct_ntl_seeds = true;
  int stack = 0;
  DistillSpec loss;
  // Checkpoint and metrics CSV land here as <run_id>.ckpt / <run_id>.csv.
  // Empty means nothing is written.
  std::filesystem::path out_dir;

  // ConfigError on any violated field constraint.
  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  float lr = 0.0f;
  double train_loss = 0.0;
  double ce_component = 0.0;
  double feat_component = 0.0;
  std::vector<double> components;  // per teacher, unweighted
  double test_error = 0.0;         // percent
};

struct RunRecord {
  std::string run_id;
  int stack = 0;
  std::vector<EpochMetrics> epochs;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
  std::uint64_t checkpoint_hash = 0;
  std::vector<std::uint64_t> teacher_hashes;
  std::shared_ptr<ResNet> model;

  double final_test_error() const { return epochs.empty() ? 100.0 : epochs.back().test_error; }
};

// Per-step loss decomposition: total = ce_component + feat_component and
// feat_component = weight * sum(components).
struct StepLog {
  int epoch = 0;
  int step = 0;
  float lr = 0.0f;
  double total = 0.0;
  double ce_component = 0.0;
  double feat_component = 0.0;
  float weight = 0.0f;
  std::vector<double> components;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(std::size_t teacher)> on_teacher_forward;
  std::function<void()> on_student_forward;
};

struct Teacher {
  std::shared_ptr<ResNet> net;
  std::uint64_t hash = 0;
  std::string source;
};

// ConfigError naming the first missing file.
std::vector<Teacher> load_teachers(std::span<const std::filesystem::path> paths);
Teacher make_teacher(std::shared_ptr<ResNet> net, std::string source = "memory");

RunRecord train_scratch(const TrainConfig& config, const Dataset& train, const Dataset& test,
                        const TrainHooks& hooks = {});

// Any method against any roster; several teachers sum their terms with an
// unchanged weight. The teachers are frozen for the duration.
RunRecord train_distill(const TrainConfig& config, std::span<const Teacher> teachers,
                        const Dataset& train, const Dataset& test, const TrainHooks& hooks = {});

// method must be feed and the roster hold at least two teachers.
RunRecord train_pfeed(const TrainConfig& config, std::span<const Teacher> teachers,
                      const Dataset& train, const Dataset& test, const TrainHooks& hooks = {});

// method must be l1, at or ft.
RunRecord train_multi_baseline(const TrainConfig& config, std::span<const Teacher> teachers,
                               const Dataset& train, const Dataset& test,
                               const TrainHooks& hooks = {});

// Stack 1 trains from scratch with `seed`; stack i >= 2 runs FEED from the
// stack i-1 checkpoint with a fresh student seeded seed + i. Requires an
// out_dir. A stack whose checkpoint verifies and whose CSV is complete is
// reused instead of retrained, so an interrupted chain resumes.
std::vector<RunRecord> train_sfeed(const TrainConfig& base, int stacks, const Dataset& train,
                                   const Dataset& test, const TrainHooks& hooks = {});

// Top-1 error in percent, eval-mode batch norm. Ties go to the lowest class
// index. ConfigError when the class counts differ.
double evaluate(ResNet& net, const Dataset& data, int batch_size = 256);
double evaluate(const std::filesystem::path& checkpoint, const Dataset& data);

inline constexpr const char* kMetricsHeader =
    "run_id,stack,epoch,lr,train_loss,ce_component,feat_component,test_error";

void write_metrics_csv(const RunRecord& record, const std::filesystem::path& path);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

}  // namespace feed
