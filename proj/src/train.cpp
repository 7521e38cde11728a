#include "feed/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <future>
#include <numeric>
#include <optional>
#include <sstream>

#include "feed/checkpoint.hpp"
#include "feed/errors.hpp"
#include "feed/optim.hpp"
#include "feed/paraphraser.hpp"

namespace feed {
namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Freezes the roster for the lifetime of a run and restores the flags after.
class FreezeScope {
 public:
  explicit FreezeScope(std::span<const Teacher> teachers) {
    for (const Teacher& t : teachers) {
      saved_.emplace_back(t.net.get(), t.net->frozen());
      t.net->set_frozen(true);
    }
  }
  ~FreezeScope() {
    for (auto& [net, was] : saved_) net->set_frozen(was);
  }
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  std::vector<std::pair<ResNet*, bool>> saved_;
};

struct Objective {
  Tensor total;
  double ce_component = 0.0;
  double feat_component = 0.0;
  float weight = 0.0f;
  std::vector<double> components;
};

class Trainer {
 public:
  Trainer(const TrainConfig& config, std::span<const Teacher> teachers, const Dataset& train,
          const Dataset& test, const TrainHooks& hooks)
      : cfg_(config), teachers_(teachers), train_(train), test_(test), hooks_(hooks) {}

  RunRecord run();

 private:
  void check_compatibility();
  void build_adapters();
  void pretrain_paraphrasers();
  std::vector<ForwardOutput> teacher_forward(const Tensor& x, bool notify);
  Objective objective(const ForwardOutput& s, const std::vector<ForwardOutput>& t,
                      std::span<const int> labels);
  std::vector<std::vector<Index>> batches(Rng& rng) const;

  const TrainConfig& cfg_;
  std::span<const Teacher> teachers_;
  const Dataset& train_;
  const Dataset& test_;
  const TrainHooks& hooks_;

  std::shared_ptr<ResNet> student_;
  std::vector<std::unique_ptr<Ntl>> ntls_;
  std::vector<std::unique_ptr<Paraphraser>> paraphrasers_;
  std::vector<std::unique_ptr<Translator>> translators_;
};

std::vector<std::vector<Index>> Trainer::batches(Rng& rng) const {
  std::vector<Index> order(train_.count);
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<Index>> out;
  for (Index start = 0; start < train_.count; start += cfg_.batch_size) {
    const Index end = std::min<Index>(start + cfg_.batch_size, train_.count);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

void Trainer::check_compatibility() {
  if (cfg_.arch.num_classes != train_.num_classes || cfg_.arch.num_classes != test_.num_classes) {
    throw ConfigError("architecture " + cfg_.arch.str() + " has " +
                      std::to_string(cfg_.arch.num_classes) + " classes but the dataset has " +
                      std::to_string(train_.num_classes));
  }
  if (train_.count < 1) throw ConfigError("empty training set");
  const LossMethod m = cfg_.loss.method;
  if (m == LossMethod::CE) return;
  if (teachers_.empty()) throw ConfigError(std::string(to_string(m)) + " needs a teacher");

  const std::vector<Index> probe_rows{0};
  const Tensor probe = train_.gather(probe_rows);
  NoGradGuard no_grad;
  const ForwardOutput s = student_->forward_with_taps(probe, Mode::Eval);
  for (std::size_t n = 0; n < teachers_.size(); ++n) {
    const ForwardOutput t = teachers_[n].net->forward_with_taps(probe, Mode::Eval);
    const std::string who = "teacher " + std::to_string(n) + " (" + teachers_[n].source + ")";
    if ((m == LossMethod::KD || m == LossMethod::BAN) && t.logits.shape() != s.logits.shape()) {
      throw ConfigError(who + " logits " + t.logits.shape().str() + " vs student " +
                        s.logits.shape().str());
    }
    if ((m == LossMethod::L1 || m == LossMethod::FEED || m == LossMethod::FT) &&
        t.final_map.shape() != s.final_map.shape()) {
      throw ConfigError(who + " final feature map " + t.final_map.shape().str() +
                        " vs student " + s.final_map.shape().str());
    }
    if (m == LossMethod::AT) {
      bool ok = t.groups.size() == s.groups.size();
      for (std::size_t l = 0; ok && l < t.groups.size(); ++l) {
        const Shape& a = t.groups[l].second.shape();
        const Shape& b = s.groups[l].second.shape();
        ok = a[2] == b[2] && a[3] == b[3];
      }
      if (!ok) throw ConfigError(who + " attention groups do not match the student's");
    }
  }
}

void Trainer::build_adapters() {
  const std::uint64_t aux = derive_seed(cfg_.seed, stream::kAuxiliary);
  const Index channels = student_->final_channels();
  for (std::size_t n = 0; n < teachers_.size(); ++n) {
    const std::uint64_t s = derive_seed(aux, cfg_.distinct_ntl_seeds ? n : 0);
    if (cfg_.loss.method == LossMethod::FEED) {
      ntls_.push_back(build_ntl(channels, s, cfg_.loss.ntl_style));
    } else if (cfg_.loss.method == LossMethod::FT) {
      paraphrasers_.push_back(build_paraphraser(channels, cfg_.loss.paraphraser_rate, s));
      translators_.push_back(
          build_translator(channels, paraphrasers_.back()->factor_channels(), derive_seed(s, 1)));
    }
  }
}

std::vector<ForwardOutput> Trainer::teacher_forward(const Tensor& x, bool notify) {
  std::vector<ForwardOutput> out(teachers_.size());
  if (cfg_.parallel_teachers && teachers_.size() > 1) {
    std::vector<std::future<ForwardOutput>> jobs;
    for (const Teacher& t : teachers_) {
      jobs.push_back(std::async(std::launch::async, [&t, &x] {
        NoGradGuard no_grad;
        return t.net->forward_with_taps(x, Mode::Eval);
      }));
    }
    for (std::size_t n = 0; n < jobs.size(); ++n) out[n] = jobs[n].get();
  } else {
    NoGradGuard no_grad;
    for (std::size_t n = 0; n < teachers_.size(); ++n) {
      out[n] = teachers_[n].net->forward_with_taps(x, Mode::Eval);
    }
  }
  if (notify && hooks_.on_teacher_forward) {
    for (std::size_t n = 0; n < teachers_.size(); ++n) hooks_.on_teacher_forward(n);
  }
  return out;
}

void Trainer::pretrain_paraphrasers() {
  const int epochs =
      std::max(1, static_cast<int>(std::lround(cfg_.loss.ft_pretrain_fraction * cfg_.epochs)));
  Rng rng(derive_seed(cfg_.seed, stream::kAuxiliary + 100));
  for (std::size_t n = 0; n < paraphrasers_.size(); ++n) {
    Paraphraser& p = *paraphrasers_[n];
    Sgd opt(p.parameter_tensors(), cfg_.momentum, cfg_.weight_decay);
    for (int e = 0; e < epochs; ++e) {
      for (const auto& rows : batches(rng)) {
        const Tensor x = train_.gather(rows);
        Tensor feat;
        {
          NoGradGuard no_grad;
          feat = teachers_[n].net->forward_with_taps(x, Mode::Eval).final_map;
        }
        const Tensor rec = reconstruction_loss(feat, p.forward(feat, Mode::Train));
        if (!std::isfinite(rec.item())) {
          throw NumericError("paraphraser " + std::to_string(n) + " diverged in pre-training epoch " +
                             std::to_string(e + 1) + "; lower paraphraser_lr (" +
                             format_double(cfg_.loss.paraphraser_lr) + ")");
        }
        opt.zero_grad();
        backward(rec);
        opt.step(cfg_.loss.paraphraser_lr);
      }
    }
    p.set_frozen(true);
  }
}

Objective Trainer::objective(const ForwardOutput& s, const std::vector<ForwardOutput>& t,
                             std::span<const int> labels) {
  Objective o;
  const DistillSpec& spec = cfg_.loss;
  const Tensor ce = cross_entropy(s.logits, labels);
  std::vector<Tensor> terms;
  switch (spec.method) {
    case LossMethod::CE:
      o.total = ce;
      o.ce_component = ce.item();
      return o;
    case LossMethod::KD: {
      const float a = spec.kd.alpha, temp = spec.kd.temperature;
      std::vector<Tensor> logits;
      for (const ForwardOutput& f : t) logits.push_back(f.logits);
      const Tensor kl = kd_divergence(s.logits, logits, temp, spec.kd_ensemble);
      o.weight = a * temp * temp;
      o.total = add(scale(ce, 1.0f - a), scale(kl, o.weight));
      o.ce_component = static_cast<double>(1.0f - a) * ce.item();
      o.components = {kl.item()};
      o.feat_component = static_cast<double>(o.weight) * kl.item();
      return o;
    }
    case LossMethod::BAN:
      o.weight = 1.0f;
      for (const ForwardOutput& f : t) terms.push_back(ban_divergence(s.logits, f.logits));
      break;
    case LossMethod::AT:
      o.weight = spec.feature.beta;
      for (const ForwardOutput& f : t) terms.push_back(at_term(s, f, spec.feature));
      break;
    case LossMethod::L1:
      o.weight = spec.feature.beta;
      for (const ForwardOutput& f : t) {
        terms.push_back(normalized_l1_distance(f.final_map, s.final_map, spec.feature));
      }
      break;
    case LossMethod::FT:
      o.weight = spec.feature.beta;
      for (std::size_t n = 0; n < t.size(); ++n) {
        terms.push_back(ft_losses(t[n].final_map, s.final_map, s.logits, *paraphrasers_[n],
                                  *translators_[n], labels, spec.feature, Mode::Eval)
                            .term);
      }
      break;
    case LossMethod::FEED: {
      std::vector<Network*> ntls;
      for (auto& n : ntls_) ntls.push_back(n.get());
      LossBreakdown b = pfeed_total(s, t, ntls, labels, spec.feature);
      o.total = b.total;
      o.weight = b.beta;
      o.ce_component = b.ce.item();
      for (const Tensor& c : b.components) o.components.push_back(c.item());
      o.feat_component =
          static_cast<double>(o.weight) *
          std::accumulate(o.components.begin(), o.components.end(), 0.0);
      return o;
    }
  }
  Tensor sum_terms = terms.front();
  for (std::size_t n = 1; n < terms.size(); ++n) sum_terms = add(sum_terms, terms[n]);
  o.total = add(ce, scale(sum_terms, o.weight));
  o.ce_component = ce.item();
  for (const Tensor& c : terms) o.components.push_back(c.item());
  o.feat_component = static_cast<double>(o.weight) *
                     std::accumulate(o.components.begin(), o.components.end(), 0.0);
  return o;
}

RunRecord Trainer::run() {
  cfg_.validate();
  student_ = build_resnet(cfg_.arch, cfg_.seed);
  FreezeScope freeze(teachers_);
  check_compatibility();
  build_adapters();
  if (!paraphrasers_.empty()) pretrain_paraphrasers();

  std::vector<Tensor> params = student_->parameter_tensors();
  for (auto& n : ntls_) {
    for (const Tensor& p : n->parameter_tensors()) params.push_back(p);
  }
  for (auto& tr : translators_) {
    for (const Tensor& p : tr->parameter_tensors()) params.push_back(p);
  }
  Sgd opt(std::move(params), cfg_.momentum, cfg_.weight_decay);
  const LrSchedule schedule(cfg_.lr, cfg_.lr_schedule);
  Rng shuffle_rng(derive_seed(cfg_.seed, stream::kShuffle));
  Rng augment_rng(derive_seed(cfg_.seed, stream::kAugment));

  RunRecord record;
  record.run_id = cfg_.run_id;
  record.stack = cfg_.stack;
  for (const Teacher& t : teachers_) record.teacher_hashes.push_back(t.hash);
  if (!cfg_.out_dir.empty()) {
    record.checkpoint = cfg_.out_dir / (cfg_.run_id + ".ckpt");
    record.metrics_csv = cfg_.out_dir / (cfg_.run_id + ".csv");
  }

  const bool needs_teachers = cfg_.loss.method != LossMethod::CE;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    const float lr = schedule.at(epoch);
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = lr;
    double seen = 0.0;
    int step = 0;
    for (const auto& rows : batches(shuffle_rng)) {
      Tensor x = train_.gather(rows);
      if (cfg_.augment) augment_batch(x, augment_rng);
      const std::vector<int> labels = train_.gather_labels(rows);
      Objective o;
      try {
        std::vector<ForwardOutput> t;
        if (needs_teachers) t = teacher_forward(x, true);
        const ForwardOutput s = student_->forward_with_taps(x, Mode::Train);
        if (hooks_.on_student_forward) hooks_.on_student_forward();
        o = objective(s, t, labels);
        if (!std::isfinite(o.total.item())) throw NumericError("loss is not finite");
        opt.zero_grad();
        backward(o.total);
      } catch (const NumericError& e) {
        throw NumericError(cfg_.run_id + ": epoch " + std::to_string(epoch + 1) + " step " +
                           std::to_string(step) + " (lr " + format_double(lr) + "): " + e.what());
      }
      opt.step(lr);

      const double w = static_cast<double>(rows.size());
      seen += w;
      m.train_loss += w * o.total.item();
      m.ce_component += w * o.ce_component;
      m.feat_component += w * o.feat_component;
      if (m.components.size() < o.components.size()) m.components.resize(o.components.size());
      for (std::size_t n = 0; n < o.components.size(); ++n) m.components[n] += w * o.components[n];
      if (hooks_.on_step) {
        hooks_.on_step(StepLog{epoch + 1, step, lr, o.total.item(), o.ce_component,
                               o.feat_component, o.weight, o.components});
      }
      ++step;
    }
    m.train_loss /= seen;
    m.ce_component /= seen;
    m.feat_component /= seen;
    for (double& c : m.components) c /= seen;
    m.test_error = evaluate(*student_, test_);
    record.epochs.push_back(std::move(m));
    if (!record.metrics_csv.empty()) write_metrics_csv(record, record.metrics_csv);
  }

  if (!record.checkpoint.empty()) {
    CheckpointMeta meta;
    meta.arch = cfg_.arch.str();
    meta.stack = cfg_.stack;
    meta.seed = cfg_.seed;
    meta.extra["run_id"] = cfg_.run_id;
    meta.extra["method"] = std::string(to_string(cfg_.loss.method));
    meta.extra["epochs"] = std::to_string(cfg_.epochs);
    meta.extra["test_error"] = format_double(record.final_test_error());
    std::string hashes;
    for (std::uint64_t h : record.teacher_hashes) hashes += (hashes.empty() ? "" : ",") + hex64(h);
    if (!hashes.empty()) meta.extra["teacher_hashes"] = hashes;
    save_checkpoint(*student_, meta, record.checkpoint);
    record.checkpoint_hash = checkpoint_hash(record.checkpoint);
  }
  record.model = student_;
  return record;
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

std::optional<RunRecord> resume_stack(const TrainConfig& cfg) {
  const auto ckpt = cfg.out_dir / (cfg.run_id + ".ckpt");
  const auto csv = cfg.out_dir / (cfg.run_id + ".csv");
  if (!std::filesystem::exists(ckpt) || !std::filesystem::exists(csv)) return std::nullopt;
  try {
    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    if (loaded.meta.arch != cfg.arch.str() || loaded.meta.stack != cfg.stack ||
        loaded.meta.seed != cfg.seed) {
      return std::nullopt;
    }
    RunRecord r;
    r.epochs = read_metrics_csv(csv);
    if (static_cast<int>(r.epochs.size()) != cfg.epochs) return std::nullopt;
    r.run_id = cfg.run_id;
    r.stack = cfg.stack;
    r.checkpoint = ckpt;
    r.metrics_csv = csv;
    r.checkpoint_hash = loaded.hash;
    if (auto it = loaded.meta.extra.find("teacher_hashes"); it != loaded.meta.extra.end()) {
      std::istringstream in(it->second);
      std::string item;
      while (std::getline(in, item, ',')) r.teacher_hashes.push_back(parse_hex64(item));
    }
    r.model = std::move(loaded.net);
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0f)) throw ConfigError("lr must be >= 0");
  if (!(momentum >= 0.0f) || !(weight_decay >= 0.0f)) {
    throw ConfigError("momentum and weight_decay must be >= 0");
  }
  if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("run_id must be a non-empty file stem");
  }
  try {
    LrSchedule check(lr, lr_schedule);
    loss.kd.validate();
    loss.feature.validate();
    if (loss.method == LossMethod::FT) factor_channels(64, loss.paraphraser_rate);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (!(loss.ft_pretrain_fraction >= 0.0 && loss.ft_pretrain_fraction <= 1.0)) {
    throw ConfigError("ft_pretrain_fraction must lie in [0, 1]");
  }
  if (!(loss.paraphraser_lr > 0.0f)) throw ConfigError("paraphraser_lr must be positive");
}

Teacher make_teacher(std::shared_ptr<ResNet> net, std::string source) {
  Teacher t;
  CheckpointMeta meta;
  meta.arch = net->arch().str();
  meta.seed = net->seed();
  const auto bytes = encode_checkpoint(net->state(), meta);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  t.hash = stored;
  t.net = std::move(net);
  t.source = std::move(source);
  return t;
}

std::vector<Teacher> load_teachers(std::span<const std::filesystem::path> paths) {
  for (const auto& p : paths) {
    if (!std::filesystem::exists(p)) throw ConfigError("teacher checkpoint not found: " + p.string());
  }
  std::vector<Teacher> out;
  for (const auto& p : paths) {
    LoadedCheckpoint c = load_checkpoint(p);
    Teacher t;
    t.net = std::move(c.net);
    t.hash = c.hash;
    t.source = p.string();
    out.push_back(std::move(t));
  }
  return out;
}

RunRecord train_scratch(const TrainConfig& config, const Dataset& train, const Dataset& test,
                        const TrainHooks& hooks) {
  TrainConfig cfg = config;
  cfg.loss.method = LossMethod::CE;
  cfg.loss.teachers.clear();
  return Trainer(cfg, {}, train, test, hooks).run();
}

RunRecord train_distill(const TrainConfig& config, std::span<const Teacher> teachers,
                        const Dataset& train, const Dataset& test, const TrainHooks& hooks) {
  if (config.loss.method != LossMethod::CE && teachers.empty()) {
    throw ConfigError(std::string(to_string(config.loss.method)) + " needs at least one teacher");
  }
  return Trainer(config, teachers, train, test, hooks).run();
}

RunRecord train_pfeed(const TrainConfig& config, std::span<const Teacher> teachers,
                      const Dataset& train, const Dataset& test, const TrainHooks& hooks) {
  if (config.loss.method != LossMethod::FEED) throw ConfigError("pfeed requires method=feed");
  if (teachers.size() < 2) throw ConfigError("pfeed needs at least two teachers");
  return Trainer(config, teachers, train, test, hooks).run();
}

RunRecord train_multi_baseline(const TrainConfig& config, std::span<const Teacher> teachers,
                               const Dataset& train, const Dataset& test,
                               const TrainHooks& hooks) {
  const LossMethod m = config.loss.method;
  if (m != LossMethod::L1 && m != LossMethod::AT && m != LossMethod::FT) {
    throw ConfigError("multi-teacher baselines take method l1, at or ft");
  }
  if (teachers.empty()) throw ConfigError("multi-teacher baseline needs teachers");
  return Trainer(config, teachers, train, test, hooks).run();
}

std::vector<RunRecord> train_sfeed(const TrainConfig& base, int stacks, const Dataset& train,
                                   const Dataset& test, const TrainHooks& hooks) {
  if (stacks < 2) throw ConfigError("sfeed needs stacks >= 2");
  if (base.out_dir.empty()) throw ConfigError("sfeed needs an output directory");
  std::vector<RunRecord> records;
  for (int i = 1; i <= stacks; ++i) {
    TrainConfig cfg = base;
    cfg.run_id = base.run_id + "_stack" + std::to_string(i);
    cfg.stack = i;
    cfg.seed = i == 1 ? base.seed : base.seed + static_cast<std::uint64_t>(i);
    cfg.loss.method = i == 1 ? LossMethod::CE : LossMethod::FEED;
    cfg.loss.teachers.clear();
    if (i > 1) cfg.loss.teachers = {records.back().checkpoint};

    if (auto resumed = resume_stack(cfg)) {
      records.push_back(std::move(*resumed));
      continue;
    }
    if (i == 1) {
      records.push_back(train_scratch(cfg, train, test, hooks));
    } else {
      const std::vector<Teacher> teachers = load_teachers(cfg.loss.teachers);
      records.push_back(train_distill(cfg, teachers, train, test, hooks));
    }
  }
  return records;
}

double evaluate(ResNet& net, const Dataset& data, int batch_size) {
  if (net.arch().num_classes != data.num_classes) {
    throw ConfigError("checkpoint has " + std::to_string(net.arch().num_classes) +
                      " classes, dataset " + std::to_string(data.num_classes));
  }
  if (data.count == 0) return 0.0;
  NoGradGuard no_grad;
  Index wrong = 0;
  std::vector<Index> rows;
  for (Index start = 0; start < data.count; start += batch_size) {
    const Index end = std::min<Index>(start + batch_size, data.count);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor logits = net.forward(data.gather(rows), Mode::Eval);
    const Index k = logits.dim(1);
    const float* z = logits.data().data();
    for (Index i = 0; i < end - start; ++i) {
      Index best = 0;
      for (Index c = 1; c < k; ++c) {
        if (z[i * k + c] > z[i * k + best]) best = c;
      }
      if (best != data.labels[start + i]) ++wrong;
    }
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(data.count);
}

double evaluate(const std::filesystem::path& checkpoint, const Dataset& data) {
  LoadedCheckpoint c = load_checkpoint(checkpoint);
  return evaluate(*c.net, data);
}

void write_metrics_csv(const RunRecord& record, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMetricsHeader << '\n';
  for (const EpochMetrics& m : record.epochs) {
    out << record.run_id << ',' << record.stack << ',' << m.epoch << ',' << format_double(m.lr)
        << ',' << format_double(m.train_loss) << ',' << format_double(m.ce_component) << ','
        << format_double(m.feat_component) << ',' << format_double(m.test_error) << '\n';
  }
  if (!out) throw IoError("write failed on " + path.string());
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError(path.string() + ": unexpected metrics header");
  }
  std::vector<EpochMetrics> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) f.push_back(cell);
    if (f.size() != 8) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has " +
                        std::to_string(f.size()) + " fields");
    }
    try {
      EpochMetrics m;
      m.epoch = std::stoi(f[2]);
      m.lr = std::stof(f[3]);
      m.train_loss = std::stod(f[4]);
      m.ce_component = std::stod(f[5]);
      m.feat_component = std::stod(f[6]);
      m.test_error = std::stod(f[7]);
      out.push_back(std::move(m));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": malformed number on line " + std::to_string(lineno));
    }
  }
  return out;
}

}  // namespace feed
