#include "feed/cli.hpp"

#include <cstdio>
#include <cstdlib>

#include "feed/errors.hpp"
#include "feed/optim.hpp"

namespace feed {
namespace {

constexpr const char* kUsage =
    "usage: feedkit <train-scratch|distill|pfeed|sfeed|evaluate|analyze-recon> "
    "[config=FILE] [key=value | --key=value ...]";

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

NormalizeScope parse_scope(const std::string& s) {
  if (s == "sample") return NormalizeScope::Sample;
  if (s == "batch") return NormalizeScope::Batch;
  throw ConfigError("normalize_scope must be sample or batch, got '" + s + "'");
}

KdEnsemble parse_ensemble(const std::string& s) {
  if (s == "prob") return KdEnsemble::Prob;
  if (s == "logit") return KdEnsemble::Logit;
  throw ConfigError("kd_ensemble must be prob or logit, got '" + s + "'");
}

NtlStyle parse_ntl_style(const std::string& s) {
  if (s == "bn_relu") return NtlStyle::BnRelu;
  if (s == "plain") return NtlStyle::Plain;
  throw ConfigError("ntl_style must be bn_relu or plain, got '" + s + "'");
}

std::uint64_t as_seed(long long v, const char* key) {
  if (v < 0) throw ConfigError(std::string(key) + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

void print_run(const RunRecord& r, std::ostream& out) {
  out << "run_id=" << r.run_id << " stack=" << r.stack << " checkpoint=" << r.checkpoint.string()
      << " metrics=" << r.metrics_csv.string() << '\n';
  out << "test_error=" << percent(r.final_test_error()) << "%\n";
}

int dispatch(const std::string& command, const Config& c, std::ostream& out) {
  if (command == "evaluate" || command == "analyze-recon") {
    const std::vector<std::string> ckpts = c.list("ckpt");
    if (ckpts.empty()) throw ConfigError(command + " needs ckpt=PATH");
    const DataPair data = load_data(c);
    const std::string split = c.str("split", "test");
    if (split != "train" && split != "test") throw ConfigError("split must be train or test");
    const Dataset& d = split == "train" ? data.train : data.test;
    if (command == "evaluate") {
      if (ckpts.size() != 1) throw ConfigError("evaluate takes exactly one ckpt");
      out << "test_error=" << percent(evaluate(std::filesystem::path(ckpts[0]), d)) << "%\n";
      return kExitOk;
    }
    const ReconConfig rc = recon_config_from(c);
    const std::filesystem::path dir = train_config_from(c).out_dir;
    std::vector<ReconReport> reports;
    for (const std::string& ck : ckpts) {
      reports.push_back(analyze_recon(ck, d, rc));
      const auto csv = dir / (std::filesystem::path(ck).stem().string() + "_recon.csv");
      reports.back().write_csv(csv);
      out << "report=" << csv.string() << '\n';
    }
    out << compare_recon(reports).str();
    return kExitOk;
  }

  TrainConfig cfg = train_config_from(c);
  if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");
  const DataPair data = load_data(c);
  if (command == "train-scratch") {
    print_run(train_scratch(cfg, data.train, data.test), out);
  } else if (command == "distill" || command == "pfeed") {
    if (command == "pfeed") cfg.loss.method = LossMethod::FEED;
    if (cfg.loss.method == LossMethod::CE) throw ConfigError("distill needs method other than ce");
    if (cfg.loss.teachers.empty()) throw ConfigError(command + " needs teachers=a.ckpt[,b.ckpt...]");
    const std::vector<Teacher> teachers = load_teachers(cfg.loss.teachers);
    print_run(command == "pfeed" ? train_pfeed(cfg, teachers, data.train, data.test)
                                 : train_distill(cfg, teachers, data.train, data.test),
              out);
  } else if (command == "sfeed") {
    const auto stacks = static_cast<int>(c.integer("stacks", 3));
    for (const RunRecord& r : train_sfeed(cfg, stacks, data.train, data.test)) print_run(r, out);
  } else {
    throw ConfigError("unknown subcommand '" + command + "'\n" + kUsage);
  }
  return kExitOk;
}

}  // namespace

DatasetSource dataset_source_from(const Config& c, Split split) {
  DatasetSource s;
  s.kind = parse_dataset_kind(c.str("dataset", "synthetic-blobs"));
  s.split = split;
  const bool train = split == Split::Train;
  s.path = c.str(train ? "train_path" : "test_path");
  s.labels_path = c.str(train ? "train_labels" : "test_labels");
  if (s.kind != DatasetKind::SyntheticBlobs && s.path.empty()) {
    throw ConfigError(std::string(to_string(s.kind)) + " needs " +
                      (train ? "train_path" : "test_path"));
  }
  if (s.kind == DatasetKind::Idx && s.labels_path.empty()) {
    throw ConfigError(std::string("idx needs ") + (train ? "train_labels" : "test_labels"));
  }
  s.num_classes = static_cast<int>(c.integer("num_classes", 10));
  s.samples_per_class = static_cast<int>(
      train ? c.integer("samples_per_class", 200) : c.integer("test_samples_per_class", 100));
  s.image_size = static_cast<int>(c.integer("image_size", 32));
  s.noise_sigma = static_cast<float>(c.real("noise_sigma", s.noise_sigma));
  s.seed = as_seed(c.integer("data_seed", 0), "data_seed");
  return s;
}

DataPair load_data(const Config& c) {
  DataPair p{load_dataset(dataset_source_from(c, Split::Train)),
             load_dataset(dataset_source_from(c, Split::Test))};
  if (c.boolean("normalize", true)) {
    const ChannelStats stats = channel_stats(p.train);
    normalize(p.train, stats);
    normalize(p.test, stats);
  }
  return p;
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.run_id = c.str("run_id", t.run_id);
  t.out_dir = c.str("out_dir", "runs");
  if (const char* env = std::getenv("FEEDKIT_OUT"); env != nullptr && *env != '\0') {
    t.out_dir = env;
  }
  t.seed = as_seed(c.integer("seed", 0), "seed");
  if (c.has("arch")) {
    try {
      t.arch = ArchDescriptor::parse(c.str("arch"));
    } catch (const VersionError& e) {
      throw ConfigError(e.what());
    }
  } else {
    t.arch.num_classes = static_cast<int>(c.integer("num_classes", 10));
  }
  t.epochs = static_cast<int>(c.integer("epochs", t.epochs));
  t.batch_size = static_cast<int>(c.integer("batch_size", t.batch_size));
  t.lr = static_cast<float>(c.real("lr", t.lr));
  if (c.has("lr_schedule")) t.lr_schedule = LrSchedule::parse_milestones(c.str("lr_schedule"));
  t.momentum = static_cast<float>(c.real("momentum", t.momentum));
  t.weight_decay = static_cast<float>(c.real("weight_decay", t.weight_decay));
  const bool synthetic = c.str("dataset", "synthetic-blobs") == "synthetic-blobs";
  t.augment = c.boolean("augment", !synthetic);
  t.parallel_teachers = c.boolean("parallel_teachers", false);

  DistillSpec& l = t.loss;
  l.method = parse_loss_method(c.str("method", "ce"));
  for (const std::string& p : c.list("teachers")) l.teachers.emplace_back(p);
  l.kd.alpha = static_cast<float>(c.real("alpha", l.kd.alpha));
  l.kd.temperature = static_cast<float>(c.real("temperature", l.kd.temperature));
  l.feature.beta = static_cast<float>(c.real("beta", l.feature.beta));
  l.feature.eps = static_cast<float>(c.real("eps", l.feature.eps));
  l.feature.scope = parse_scope(c.str("normalize_scope", "sample"));
  l.kd_ensemble = parse_ensemble(c.str("kd_ensemble", "prob"));
  l.ntl_style = parse_ntl_style(c.str("ntl_style", "bn_relu"));
  l.paraphraser_rate = c.real("paraphraser_rate", l.paraphraser_rate);
  l.ft_pretrain_fraction = c.real("ft_pretrain_fraction", l.ft_pretrain_fraction);
  l.paraphraser_lr = static_cast<float>(c.real("paraphraser_lr", l.paraphraser_lr));
  t.validate();
  return t;
}

ReconConfig recon_config_from(const Config& c) {
  ReconConfig r;
  r.rate = c.real("recon_rate", r.rate);
  r.epochs = static_cast<int>(c.integer("recon_epochs", r.epochs));
  r.batch_size = static_cast<int>(c.integer("recon_batch_size", r.batch_size));
  r.lr = static_cast<float>(c.real("recon_lr", r.lr));
  r.momentum = static_cast<float>(c.real("recon_momentum", r.momentum));
  r.seed = as_seed(c.integer("recon_seed", 0), "recon_seed");
  r.tap = c.str("recon_tap", r.tap);
  if (r.epochs < 1 || r.batch_size < 1 || !(r.lr > 0.0f)) {
    throw ConfigError("recon_epochs, recon_batch_size and recon_lr must be positive");
  }
  try {
    factor_channels(64, r.rate);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return r;
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << kUsage << '\n';
    return kExitConfig;
  }
  const std::string& command = args[0];
  Config c;
  try {
    for (std::size_t i = 1; i < args.size(); ++i) c.apply_override(args[i]);
    if (c.has("config")) {
      // File values first, command-line values on top.
      Config merged;
      merged.load_file(c.str("config"));
      for (const auto& [k, v] : c.values()) merged.set(k, v);
      c = merged;
    }
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    return dispatch(command, c, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace feed
