#include "feed/losses.hpp"

#include <array>
#include <cmath>
#include <string>

#include "feed/errors.hpp"

namespace feed {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

constexpr std::array<std::pair<LossMethod, std::string_view>, 7> kMethodNames{{
    {LossMethod::CE, "ce"},
    {LossMethod::KD, "kd"},
    {LossMethod::BAN, "ban"},
    {LossMethod::AT, "at"},
    {LossMethod::L1, "l1"},
    {LossMethod::FT, "ft"},
    {LossMethod::FEED, "feed"},
}};

// Teacher-side values enter the graph as constants.
Tensor constant(const Tensor& t) { return t.requires_grad() || !t.is_leaf() ? t.detach() : t; }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

void require_batch(const char* op, const Tensor& x) {
  if (x.rank() < 1 || x.dim(0) < 1) {
    throw DimensionError(std::string(op) + ": expected a non-empty batch, got " + x.shape().str());
  }
}

// sum_k p_k (log p_k - log q_k) averaged over rows, p = softmax(s / T).
Tensor kl_student_first(const Tensor& s, const Tensor& log_q, float temperature) {
  const Tensor log_p = log_softmax(s, temperature);
  const Tensor p = softmax(s, temperature);
  return scale(sum(mul(p, sub(log_p, log_q))), 1.0f / static_cast<float>(s.dim(0)));
}

Tensor log_softmax_constant(const Tensor& logits, float temperature) {
  NoGradGuard no_grad;
  return log_softmax(constant(logits), temperature);
}

}  // namespace

std::string_view to_string(LossMethod method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "?";
}

LossMethod parse_loss_method(std::string_view name) {
  std::string valid;
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
    valid += valid.empty() ? "" : ", ";
    valid += n;
  }
  throw ConfigError("unknown loss method '" + std::string(name) + "' (valid: " + valid + ")");
}

void KdParams::validate() const {
  if (!(alpha >= 0.0f && alpha <= 1.0f)) {
    throw ParameterError("kd alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (!(temperature > 0.0f)) {
    throw ParameterError("kd temperature must be positive, got " + std::to_string(temperature));
  }
}

void FeatureLossParams::validate() const {
  if (!(beta > 0.0f)) throw ParameterError("beta must be positive, got " + std::to_string(beta));
  if (!(eps > 0.0f)) throw ParameterError("eps must be positive, got " + std::to_string(eps));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy: expected logits [N,K], got " + logits.shape().str());
  }
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         logits.shape().str() + " logits");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  ConstRowMap z(logits.data().data(), n, k);
  RowMatrix ls = z;
  ls.colwise() -= ls.rowwise().maxCoeff();
  const Eigen::VectorXf lse = ls.array().exp().rowwise().sum().log().matrix();
  ls.colwise() -= lse;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total -= ls(i, labels[i]);
  const float value = static_cast<float>(total / static_cast<double>(n));

  RowMatrix dz = ls.array().exp().matrix();
  for (Index i = 0; i < n; ++i) dz(i, labels[i]) -= 1.0f;
  dz /= static_cast<float>(n);
  Vector dflat = Eigen::Map<Vector>(dz.data(), n * k);
  return make_result(Shape{}, Vector::Constant(1, value), {logits}, "cross_entropy",
                     [dflat = std::move(dflat)](const Vector& g, std::span<Vector*> gi) {
                       if (gi[0]) *gi[0] += g[0] * dflat;
                     });
}

Tensor kd_divergence(const Tensor& student_logits, std::span<const Tensor> teacher_logits,
                     float temperature, KdEnsemble ensemble) {
  if (teacher_logits.empty()) throw ConfigError("kd_loss: empty teacher roster");
  for (const Tensor& t : teacher_logits) require_same_shape("kd_loss", student_logits, t);
  if (!(temperature > 0.0f)) {
    throw ParameterError("kd temperature must be positive, got " + std::to_string(temperature));
  }
  if (teacher_logits.size() == 1) {
    return kl_student_first(student_logits, log_softmax_constant(teacher_logits[0], temperature),
                            temperature);
  }
  const auto count = static_cast<float>(teacher_logits.size());
  Tensor log_q;
  {
    NoGradGuard no_grad;
    Vector acc = Vector::Zero(student_logits.numel());
    if (ensemble == KdEnsemble::Logit) {
      for (const Tensor& tl : teacher_logits) acc += tl.data();
      log_q = log_softmax(Tensor(student_logits.shape(), acc / count), temperature);
    } else {
      for (const Tensor& tl : teacher_logits) acc += softmax(constant(tl), temperature).data();
      log_q = Tensor(student_logits.shape(), (acc / count).array().log().matrix());
    }
  }
  return kl_student_first(student_logits, log_q, temperature);
}

Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
               std::span<const int> labels, const KdParams& params) {
  return kd_loss(student_logits, std::span<const Tensor>(&teacher_logits, 1), labels, params,
                 KdEnsemble::Prob);
}

Tensor kd_loss(const Tensor& student_logits, std::span<const Tensor> teacher_logits,
               std::span<const int> labels, const KdParams& params, KdEnsemble ensemble) {
  params.validate();
  const float a = params.alpha, t = params.temperature;
  const Tensor kl = kd_divergence(student_logits, teacher_logits, t, ensemble);
  const Tensor ce = cross_entropy(student_logits, labels);
  return add(scale(ce, 1.0f - a), scale(kl, a * t * t));
}

Tensor ban_divergence(const Tensor& student_logits, const Tensor& teacher_logits) {
  require_same_shape("ban_loss", student_logits, teacher_logits);
  Tensor p_t, log_p_t;
  {
    NoGradGuard no_grad;
    log_p_t = log_softmax(constant(teacher_logits));
    p_t = softmax(constant(teacher_logits));
  }
  return scale(sum(mul(p_t, sub(log_p_t, log_softmax(student_logits)))),
               1.0f / static_cast<float>(student_logits.dim(0)));
}

Tensor ban_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                std::span<const int> labels) {
  const Tensor kl = ban_divergence(student_logits, teacher_logits);
  return add(cross_entropy(student_logits, labels), kl);
}

Tensor attention_map(const Tensor& a) {
  if (a.rank() != 4 || a.dim(1) < 1) {
    throw DimensionError("attention_map: expected [N,C,H,W] with C >= 1, got " + a.shape().str());
  }
  const Index n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
  const float inv_c = 1.0f / static_cast<float>(c);
  Vector out = Vector::Zero(n * hw);
  const Vector& x = a.data();
  for (Index i = 0; i < n; ++i) {
    auto dst = out.segment(i * hw, hw);
    for (Index ch = 0; ch < c; ++ch) dst += x.segment((i * c + ch) * hw, hw).cwiseAbs2();
    dst *= inv_c;
  }
  return make_result(Shape{n, a.dim(2), a.dim(3)}, std::move(out), {a}, "attention_map",
                     [input = a.impl(), n, c, hw, inv_c](const Vector& g, std::span<Vector*> gi) {
                       if (!gi[0]) return;
                       const Vector& x = input->value;
                       for (Index i = 0; i < n; ++i) {
                         for (Index ch = 0; ch < c; ++ch) {
                           const Index off = (i * c + ch) * hw;
                           gi[0]->segment(off, hw) += (2.0f * inv_c) *
                               x.segment(off, hw).cwiseProduct(g.segment(i * hw, hw));
                         }
                       }
                     });
}

Tensor at_term(const ForwardOutput& student, const ForwardOutput& teacher,
               const FeatureLossParams& params) {
  params.validate();
  if (student.groups.size() != teacher.groups.size() || student.groups.empty()) {
    throw DimensionError("at_loss: student exposes " + std::to_string(student.groups.size()) +
                         " groups, teacher " + std::to_string(teacher.groups.size()));
  }
  const bool per_sample = params.scope == NormalizeScope::Sample;
  Tensor total;
  for (std::size_t l = 0; l < student.groups.size(); ++l) {
    const Tensor& as = student.groups[l].second;
    const Tensor& at = teacher.groups[l].second;
    if (as.rank() != 4 || at.rank() != 4 || as.dim(0) != at.dim(0) || as.dim(2) != at.dim(2) ||
        as.dim(3) != at.dim(3)) {
      throw DimensionError("at_loss: group '" + student.groups[l].first + "' spatial mismatch " +
                           as.shape().str() + " vs " + at.shape().str());
    }
    Tensor qt;
    {
      NoGradGuard no_grad;
      qt = l2_normalize(flatten(attention_map(constant(at))), params.eps, per_sample);
    }
    const Tensor qs = l2_normalize(flatten(attention_map(as)), params.eps, per_sample);
    const Tensor term = mean(norm_per_sample(sub(qt, qs), 2));
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

Tensor at_loss(const ForwardOutput& student, const ForwardOutput& teacher,
               std::span<const int> labels, const FeatureLossParams& params) {
  const Tensor term = at_term(student, teacher, params);
  return add(cross_entropy(student.logits, labels), scale(term, params.beta));
}

Tensor normalized_l1_distance(const Tensor& teacher_feat, const Tensor& student_feat,
                              const FeatureLossParams& params) {
  require_same_shape("feature distance", teacher_feat, student_feat);
  require_batch("feature distance", student_feat);
  params.validate();
  const bool per_sample = params.scope == NormalizeScope::Sample;
  Tensor qt;
  {
    NoGradGuard no_grad;
    qt = l2_normalize(constant(teacher_feat), params.eps, per_sample);
  }
  const Tensor qs = l2_normalize(student_feat, params.eps, per_sample);
  return scale(sum(abs(sub(qt, qs))), 1.0f / static_cast<float>(student_feat.dim(0)));
}

Tensor feed_loss(const Tensor& teacher_feat, const Tensor& student_feat, Network& ntl,
                 const FeatureLossParams& params, Mode mode) {
  const Tensor mapped = ntl.forward(student_feat, mode);
  if (mapped.shape() != teacher_feat.shape()) {
    throw DimensionError("feed_loss: NTL output " + mapped.shape().str() +
                         " does not match teacher feature " + teacher_feat.shape().str());
  }
  return normalized_l1_distance(teacher_feat, mapped, params);
}

Tensor LossBreakdown::feature_sum() const {
  if (components.empty()) return Tensor::scalar(0.0f);
  Tensor acc = components.front();
  for (std::size_t n = 1; n < components.size(); ++n) acc = add(acc, components[n]);
  return acc;
}

LossBreakdown pfeed_total(const ForwardOutput& student, std::span<const ForwardOutput> teachers,
                          std::span<Network* const> ntls, std::span<const int> labels,
                          const FeatureLossParams& params) {
  if (teachers.empty()) throw ConfigError("pfeed: empty teacher roster");
  if (teachers.size() != ntls.size()) {
    throw ConfigError("pfeed: " + std::to_string(teachers.size()) + " teachers but " +
                      std::to_string(ntls.size()) + " NTLs");
  }
  params.validate();
  LossBreakdown out;
  out.beta = params.beta;
  out.ce = cross_entropy(student.logits, labels);
  for (std::size_t n = 0; n < teachers.size(); ++n) {
    if (ntls[n] == nullptr) throw ConfigError("pfeed: NTL " + std::to_string(n) + " is null");
    out.components.push_back(
        feed_loss(teachers[n].final_map, student.final_map, *ntls[n], params, Mode::Train));
  }
  out.total = add(out.ce, scale(out.feature_sum(), params.beta));
  return out;
}

Tensor l1_feature_loss(const Tensor& teacher_feat, const Tensor& student_feat,
                       const Tensor& student_logits, std::span<const int> labels,
                       const FeatureLossParams& params) {
  const Tensor term = normalized_l1_distance(teacher_feat, student_feat, params);
  return add(cross_entropy(student_logits, labels), scale(term, params.beta));
}

Tensor reconstruction_loss(const Tensor& x, const Tensor& reconstruction) {
  require_same_shape("reconstruction_loss", x, reconstruction);
  require_batch("reconstruction_loss", x);
  return scale(sum(square(sub(x, reconstruction))), 1.0f / static_cast<float>(x.dim(0)));
}

FtLosses ft_losses(const Tensor& teacher_feat, const Tensor& student_feat,
                   const Tensor& student_logits, Paraphraser& paraphraser, Network& translator,
                   std::span<const int> labels, const FeatureLossParams& params,
                   Mode paraphraser_mode) {
  FtLosses out;
  const Tensor x_t = constant(teacher_feat);
  const Tensor factor = paraphraser.encode(x_t, paraphraser_mode);
  out.rec = reconstruction_loss(x_t, paraphraser.decode(factor, paraphraser_mode));
  const Tensor f_t = constant(factor);
  const Tensor f_s = translator.forward(student_feat, Mode::Train);
  if (f_s.shape() != f_t.shape()) {
    throw DimensionError("ft_losses: translator output " + f_s.shape().str() +
                         " does not match paraphraser factor " + f_t.shape().str());
  }
  out.term = normalized_l1_distance(f_t, f_s, params);
  out.ce = cross_entropy(student_logits, labels);
  out.student = add(out.ce, scale(out.term, params.beta));
  return out;
}

}  // namespace feed
