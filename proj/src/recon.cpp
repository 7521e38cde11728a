#include "feed/recon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "feed/checkpoint.hpp"
#include "feed/errors.hpp"
#include "feed/losses.hpp"
#include "feed/optim.hpp"

namespace feed {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string ReconConfig::describe() const {
  return "rate=" + fmt(rate) + ",epochs=" + std::to_string(epochs) +
         ",batch_size=" + std::to_string(batch_size) + ",lr=" + fmt(lr) + ",momentum=" +
         fmt(momentum) + ",weight_decay=" + fmt(weight_decay) + ",seed=" + std::to_string(seed) +
         ",tap=" + tap;
}

void ReconReport::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# checkpoint=" << checkpoint_id << ",source=" << source_id
      << ",channels=" << feature_channels << "," << config.describe() << '\n';
  out << "epoch,mse_per_element,eq4_sum\n";
  for (std::size_t e = 0; e < mse_per_element.size(); ++e) {
    out << e + 1 << ',' << fmt(mse_per_element[e]) << ',' << fmt(eq4_sum[e]) << '\n';
  }
  if (!out) throw IoError("write failed on " + path.string());
}

Tensor extract_features(ResNet& net, const Dataset& data, std::string_view tap, int batch_size) {
  if (data.count < 1) throw ConfigError("extract_features: empty dataset");
  NoGradGuard no_grad;
  Vector all;
  Shape item;
  std::vector<Index> rows;
  for (Index start = 0; start < data.count; start += batch_size) {
    const Index end = std::min<Index>(start + batch_size, data.count);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const ForwardOutput out = net.forward_with_taps(data.gather(rows), Mode::Eval);
    const Tensor& f = out.tap(tap);
    if (start == 0) {
      item = f.shape();
      all.resize(data.count * (f.numel() / f.dim(0)));
    }
    const Index per = f.numel() / f.dim(0);
    all.segment(start * per, f.numel()) = f.data();
  }
  return Tensor(Shape{data.count, item[1], item[2], item[3]}, std::move(all));
}

ReconReport train_paraphraser(Paraphraser& p, const Tensor& features, const ReconConfig& config) {
  if (features.rank() != 4 || features.dim(1) != p.channels()) {
    throw DimensionError("train_paraphraser: features " + features.shape().str() +
                         " do not match a paraphraser over " + std::to_string(p.channels()) +
                         " channels");
  }
  if (config.epochs < 1 || config.batch_size < 1) {
    throw ConfigError("recon epochs and batch_size must be >= 1");
  }
  const Index n = features.dim(0);
  const Index per = features.numel() / n;
  ReconReport report;
  report.config = config;
  report.feature_channels = features.dim(1);

  Sgd opt(p.parameter_tensors(), config.momentum, config.weight_decay);
  Rng rng(derive_seed(config.seed, stream::kShuffle));
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  const Shape sample{features.dim(1), features.dim(2), features.dim(3)};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double eq4 = 0.0;
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index end = std::min<Index>(start + config.batch_size, n);
      const Index b = end - start;
      Vector batch(b * per);
      for (Index i = 0; i < b; ++i) {
        batch.segment(i * per, per) = features.data().segment(order[start + i] * per, per);
      }
      const Tensor x(Shape{b, sample[0], sample[1], sample[2]}, std::move(batch));
      const std::string where = "paraphraser training diverged at epoch " +
                                std::to_string(epoch + 1) + " with lr " + fmt(config.lr) +
                                "; lower the learning rate";
      float value = 0.0f;
      try {
        const Tensor rec = reconstruction_loss(x, p.forward(x, Mode::Train));
        value = rec.item();
        if (std::isfinite(value)) {
          const Tensor objective = scale(rec, 1.0f / static_cast<float>(per));
          opt.zero_grad();
          backward(objective);
          opt.step(config.lr);
        }
      } catch (const NumericError& e) {
        throw NumericError(where + " (" + e.what() + ")");
      }
      if (!std::isfinite(value)) throw NumericError(where);
      eq4 += static_cast<double>(value) * static_cast<double>(b);
    }
    eq4 /= static_cast<double>(n);
    report.eq4_sum.push_back(eq4);
    report.mse_per_element.push_back(eq4 / static_cast<double>(per));
  }
  return report;
}

ReconReport analyze_recon(const std::filesystem::path& checkpoint, const Dataset& data,
                          const ReconConfig& config) {
  LoadedCheckpoint c = load_checkpoint(checkpoint);
  c.net->set_frozen(true);
  const Tensor features = extract_features(*c.net, data, config.tap);
  Paraphraser p(features.dim(1), config.rate, config.seed);
  ReconReport report = train_paraphraser(p, features, config);
  report.checkpoint_id = checkpoint.filename().string();
  report.source_id = data.id;
  return report;
}

std::string ReconSummary::str() const {
  std::string out;
  for (const auto& [id, value] : finals) out += id + " final_mse=" + fmt(value) + "\n";
  return out;
}

ReconSummary compare_recon(std::span<const ReconReport> reports) {
  ReconSummary s;
  for (const ReconReport& r : reports) {
    const ReconReport& first = reports.front();
    if (!(r.config == first.config) || r.source_id != first.source_id ||
        r.feature_channels != first.feature_channels) {
      throw ComparabilityError("report for " + r.checkpoint_id + " (" + r.config.describe() +
                               ", source " + r.source_id + ") is not comparable with " +
                               first.checkpoint_id + " (" + first.config.describe() +
                               ", source " + first.source_id + ")");
    }
    s.finals.emplace_back(r.checkpoint_id, r.final_value());
  }
  return s;
}

}  // namespace feed
