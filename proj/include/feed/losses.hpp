#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "feed/nn.hpp"
#include "feed/paraphraser.hpp"

namespace feed {

// Stable config/CLI names: "ce", "kd", "ban", "at", "l1", "ft", "feed".
enum class LossMethod { CE, KD, BAN, AT, L1, FT, FEED };

std::string_view to_string(LossMethod method);
// Throws ConfigError listing the valid names.
LossMethod parse_loss_method(std::string_view name);

struct KdParams {
  float alpha = 0.9f;
  float temperature = 4.0f;

  // 0 <= alpha <= 1, temperature > 0; ParameterError otherwise.
  void validate() const;
};

enum class NormalizeScope { Sample, Batch };

struct FeatureLossParams {
  float beta = 500.0f;
  float eps = 1e-8f;  // added to every L2-norm denominator
  NormalizeScope scope = NormalizeScope::Sample;

  void validate() const;
};

// How several teachers' logits become one KD target.
enum class KdEnsemble { Prob, Logit };

// Mean over the batch of -log softmax(logits)[label]. IndexError on labels
// outside [0, K).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// (1 - a) CE(y, s) + a T^2 KL(softmax(s/T) || softmax(t/T)), the KL being
// sum_k p_k (log p_k - log q_k) with p from the student, averaged over the
// batch. No gradient reaches t.
Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
               std::span<const int> labels, const KdParams& params);

// KD against several teachers: Prob averages their softened distributions,
// Logit averages raw logits before softening.
Tensor kd_loss(const Tensor& student_logits, std::span<const Tensor> teacher_logits,
               std::span<const int> labels, const KdParams& params, KdEnsemble ensemble);

// The divergence terms alone, batch averaged, before any weighting.
Tensor kd_divergence(const Tensor& student_logits, std::span<const Tensor> teacher_logits,
                     float temperature, KdEnsemble ensemble = KdEnsemble::Prob);
Tensor ban_divergence(const Tensor& student_logits, const Tensor& teacher_logits);

// CE(y, s) + KL(softmax(t) || softmax(s)): teacher distribution first.
Tensor ban_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                std::span<const int> labels);

// f(A) = channel mean of A^2: [N,C,H,W] -> [N,H,W].
Tensor attention_map(const Tensor& a);

// sum over groups of the batch mean of || f(A_t)/|f(A_t)| - f(A_s)/|f(A_s)| ||_2.
Tensor at_term(const ForwardOutput& student, const ForwardOutput& teacher,
               const FeatureLossParams& params);
// CE + beta * at_term.
Tensor at_loss(const ForwardOutput& student, const ForwardOutput& teacher,
               std::span<const int> labels, const FeatureLossParams& params);

// Batch mean of || x_t/|x_t|_2 - y_s/|y_s|_2 ||_1 with the configured
// normalization scope. The teacher side is treated as a constant.
Tensor normalized_l1_distance(const Tensor& teacher_feat, const Tensor& student_feat,
                              const FeatureLossParams& params);

// One teacher's FEED term: normalized_l1_distance(x_t, ntl(x_s)).
Tensor feed_loss(const Tensor& teacher_feat, const Tensor& student_feat, Network& ntl,
                 const FeatureLossParams& params, Mode mode = Mode::Train);

// CE plus beta times a sum of per-teacher feature terms.
struct LossBreakdown {
  Tensor total;
  Tensor ce;
  std::vector<Tensor> components;  // unscaled per-teacher terms
  float beta = 0.0f;

  Tensor feature_sum() const;
};

// Ties the n-th NTL to the n-th teacher's final feature map. ConfigError on
// roster/NTL count mismatch or an empty roster.
LossBreakdown pfeed_total(const ForwardOutput& student, std::span<const ForwardOutput> teachers,
                          std::span<Network* const> ntls, std::span<const int> labels,
                          const FeatureLossParams& params);

// CE + beta * normalized_l1_distance(x_t, x_s).
Tensor l1_feature_loss(const Tensor& teacher_feat, const Tensor& student_feat,
                       const Tensor& student_logits, std::span<const int> labels,
                       const FeatureLossParams& params);

// Batch mean of the squared L2 reconstruction error summed over elements.
Tensor reconstruction_loss(const Tensor& x, const Tensor& reconstruction);

struct FtLosses {
  Tensor rec;      // paraphraser objective on teacher features
  Tensor student;  // CE + beta * term
  Tensor ce;
  Tensor term;     // normalized L1 between teacher factor and translated student factor
};

// F_T = paraphraser.encode(x_t) (constant), F_S = translator(x_s).
FtLosses ft_losses(const Tensor& teacher_feat, const Tensor& student_feat,
                   const Tensor& student_logits, Paraphraser& paraphraser, Network& translator,
                   std::span<const int> labels, const FeatureLossParams& params,
                   Mode paraphraser_mode = Mode::Eval);

}  // namespace feed
