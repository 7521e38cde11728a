#include <cmath>
#include <memory>

#include "doctest.h"
#include "feed/errors.hpp"
#include "feed/grad_check.hpp"
#include "feed/losses.hpp"
#include "support/gen.hpp"
#include "support/oracle.hpp"

using namespace feed;

namespace {

constexpr double kGradTol = 1e-3;

// Identity stand-in for an NTL.
class Identity : public Network {
 public:
  Tensor forward(const Tensor& x, Mode) override { return x; }
};

ForwardOutput taps(gen::Gen& g, Index n, int groups, Index c, Index h) {
  ForwardOutput out;
  out.logits = g.tensor(Shape{n, 5});
  for (int l = 0; l < groups; ++l) {
    out.groups.emplace_back("stage" + std::to_string(l + 1),
                            g.tensor(Shape{n, c + l, h >> l, h >> l}));
  }
  out.final_map = out.groups.back().second;
  return out;
}

constexpr double kKinkMargin = 3e-3;
constexpr double kReluMargin = 1e-2;

ForwardOutput scaled(const ForwardOutput& f, float c) {
  ForwardOutput out = f;
  for (auto& [name, t] : out.groups) t = scale(t, c);
  out.final_map = out.groups.back().second;
  return out;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("cross entropy examples") {
    const std::vector<int> y0{0};
    CHECK(cross_entropy(Tensor::from(Shape{1, 2}, {0.0f, 0.0f}), y0).item() ==
          doctest::Approx(std::log(2.0)));
    CHECK(cross_entropy(Tensor::from(Shape{1, 2}, {50.0f, 0.0f}), y0).item() < 1e-6);
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(cross_entropy(Tensor::from(Shape{1, 2}, {0.0f, 0.0f}), bad), IndexError);
    const std::vector<int> neg{-1};
    CHECK_THROWS_AS(cross_entropy(Tensor::from(Shape{1, 2}, {0.0f, 0.0f}), neg), IndexError);
  }

  TEST_CASE("cross entropy matches the oracle") {
    gen::Gen g(21);
    for (int t = 0; t < 20; ++t) {
      const Tensor z = g.tensor(Shape{4, 10}, 3.0f);
      const auto y = g.labels(4, 10);
      CHECK(cross_entropy(z, y).item() ==
            doctest::Approx(oracle::cross_entropy(oracle::from(z), y)).epsilon(1e-5));
    }
  }

  TEST_CASE("kd degenerate cases") {
    gen::Gen g(22);
    const Tensor s = g.tensor(Shape{3, 6});
    const auto y = g.labels(3, 6);
    for (float temp : {0.5f, 1.0f, 4.0f, 10.0f}) {
      CHECK(std::abs(kd_loss(s, s, y, KdParams{1.0f, temp}).item()) < 1e-6);
    }
    const Tensor t = g.tensor(Shape{3, 6});
    CHECK(kd_loss(s, t, y, KdParams{0.0f, 4.0f}).item() == cross_entropy(s, y).item());
    CHECK_THROWS_AS(kd_loss(s, g.tensor(Shape{3, 5}), y, KdParams{}), DimensionError);
    CHECK_THROWS_AS(kd_loss(s, t, y, KdParams{1.5f, 4.0f}), ParameterError);
    CHECK_THROWS_AS(kd_loss(s, t, y, KdParams{0.5f, 0.0f}), ParameterError);
  }

  TEST_CASE("kd two-class example matches a direct evaluation") {
    const Tensor s = Tensor::from(Shape{1, 2}, {1.0f, 2.0f});
    const Tensor t = Tensor::from(Shape{1, 2}, {2.0f, 1.0f});
    const std::vector<int> y{0};
    // Written out by hand: CE = log(1 + e), p = softmax([0.5, 1]), q = softmax([1, 0.5]).
    const double ce = std::log(1.0 + std::exp(1.0));
    const double p0 = 1.0 / (1.0 + std::exp(0.5)), p1 = 1.0 - p0;
    const double kl = p0 * std::log(p0 / p1) + p1 * std::log(p1 / p0);
    const double expect = 0.5 * ce + 0.5 * 4.0 * kl;
    CHECK(kd_loss(s, t, y, KdParams{0.5f, 2.0f}).item() == doctest::Approx(expect).epsilon(1e-6));
  }

  TEST_CASE("kd is linear in alpha") {
    gen::Gen g(23);
    const Tensor s = g.tensor(Shape{4, 5}), t = g.tensor(Shape{4, 5});
    const auto y = g.labels(4, 5);
    const double ce = oracle::cross_entropy(oracle::from(s), y);
    const double kl = oracle::kl(oracle::from(s), oracle::from(t), 3.0);
    for (int i = 0; i < 10; ++i) {
      const float a = static_cast<float>(g.uniform(0, 1)), b = static_cast<float>(g.uniform(0, 1));
      const double d = std::abs(kd_loss(s, t, y, KdParams{a, 3.0f}).item() -
                                kd_loss(s, t, y, KdParams{b, 3.0f}).item());
      CHECK(d <= std::abs(a - b) * (ce + 9.0 * kl) + 1e-5);
    }
  }

  TEST_CASE("kd ensembles") {
    gen::Gen g(24);
    const Tensor s = g.tensor(Shape{2, 4});
    const Tensor t = g.tensor(Shape{2, 4});
    const auto y = g.labels(2, 4);
    const std::vector<Tensor> same{t, t};
    const KdParams p{0.7f, 2.0f};
    CHECK(kd_loss(s, same, y, p, KdEnsemble::Prob).item() ==
          doctest::Approx(kd_loss(s, t, y, p).item()).epsilon(1e-6));
    CHECK(kd_loss(s, same, y, p, KdEnsemble::Logit).item() ==
          doctest::Approx(kd_loss(s, t, y, p).item()).epsilon(1e-6));
    const std::vector<Tensor> pair{t, g.tensor(Shape{2, 4})};
    CHECK(kd_loss(s, pair, y, p, KdEnsemble::Prob).item() !=
          doctest::Approx(kd_loss(s, pair, y, p, KdEnsemble::Logit).item()));
  }

  TEST_CASE("ban examples") {
    gen::Gen g(25);
    const Tensor s = g.tensor(Shape{3, 4});
    const auto y = g.labels(3, 4);
    CHECK(ban_loss(s, s, y).item() == doctest::Approx(cross_entropy(s, y).item()).epsilon(1e-6));
    const std::vector<int> y0{0};
    const Tensor zero = Tensor::from(Shape{1, 2}, {0.0f, 0.0f});
    CHECK(ban_loss(zero, zero, y0).item() == doctest::Approx(std::log(2.0)));
    const Tensor a = g.tensor(Shape{2, 5}), b = g.tensor(Shape{2, 5});
    const auto y2 = g.labels(2, 5);
    CHECK(ban_loss(a, b, y2).item() ==
          doctest::Approx(oracle::ban(oracle::from(a), oracle::from(b), y2)).epsilon(1e-5));
  }

  TEST_CASE("attention map examples") {
    gen::Gen g(26);
    const Tensor one = g.tensor(Shape{2, 1, 3, 3});
    const Tensor f1 = attention_map(one);
    for (Index i = 0; i < one.numel(); ++i) {
      CHECK(f1.data()[i] == doctest::Approx(one.data()[i] * one.data()[i]));
    }
    CHECK(attention_map(Tensor::zeros(Shape{1, 3, 2, 2})).data().isZero());
    const Tensor a = g.tensor(Shape{2, 3, 4, 4});
    const auto ref = oracle::attention_map(oracle::from(a));
    const Tensor f = attention_map(a);
    for (Index i = 0; i < f.numel(); ++i) CHECK(f.data()[i] == doctest::Approx(ref.v[i]));
  }

  TEST_CASE("attention transfer") {
    gen::Gen g(27);
    const ForwardOutput s = taps(g, 2, 3, 3, 8);
    const ForwardOutput t = taps(g, 2, 3, 4, 8);
    const auto y = g.labels(2, 5);
    FeatureLossParams p;
    p.beta = 1.0f;
    CHECK(at_term(s, s, p).item() < 1e-5);
    CHECK(at_loss(s, s, y, p).item() == doctest::Approx(cross_entropy(s.logits, y).item()));
    CHECK(at_term(s, scaled(s, 3.0f), p).item() < 1e-5);
    std::vector<oracle::D> sd, td;
    for (std::size_t l = 0; l < 3; ++l) {
      sd.push_back(oracle::from(s.groups[l].second));
      td.push_back(oracle::from(t.groups[l].second));
    }
    CHECK(at_term(s, t, p).item() == doctest::Approx(oracle::at_term(sd, td, 1e-8)).epsilon(1e-5));
    ForwardOutput bad = t;
    bad.groups[1].second = g.tensor(Shape{2, 4, 3, 3});
    CHECK_THROWS_AS(at_term(s, bad, p), DimensionError);
  }

  TEST_CASE("feed loss") {
    gen::Gen g(28);
    FeatureLossParams p;
    Identity id;
    const Tensor xt = g.tensor(Shape{3, 4, 2, 2});
    CHECK(feed_loss(xt, xt, id, p).item() < 1e-6);
    CHECK(feed_loss(xt, scale(xt, 5.0f), id, p).item() < 1e-5);
    auto ntl = build_ntl(4, 1);
    g.perturb(*ntl);
    const Tensor xs = g.tensor(Shape{3, 4, 2, 2});
    const auto mapped = oracle::ntl(oracle::from(xs), oracle::params_of(*ntl));
    const double ref = oracle::normalized_distance(oracle::from(xt), mapped, 1e-8, 1);
    CHECK(feed_loss(xt, xs, *ntl, p).item() == doctest::Approx(ref).epsilon(1e-5));
    auto wrong = build_ntl(3, 1);
    CHECK_THROWS_AS(feed_loss(xt, g.tensor(Shape{3, 3, 2, 2}), *wrong, p), DimensionError);
  }

  TEST_CASE("pfeed total") {
    gen::Gen g(29);
    FeatureLossParams p;
    ForwardOutput s = taps(g, 2, 1, 4, 2);
    const auto y = g.labels(2, 5);
    std::vector<ForwardOutput> teachers{taps(g, 2, 1, 4, 2), taps(g, 2, 1, 4, 2),
                                        taps(g, 2, 1, 4, 2)};
    std::vector<std::unique_ptr<Ntl>> owned;
    std::vector<Network*> ntls;
    for (int n = 0; n < 3; ++n) {
      owned.push_back(build_ntl(4, 10 + n));
      ntls.push_back(owned.back().get());
    }
    const LossBreakdown b = pfeed_total(s, teachers, ntls, y, p);
    double sum = 0.0;
    for (int n = 0; n < 3; ++n) {
      const double c = feed_loss(teachers[n].final_map, s.final_map, *ntls[n], p).item();
      CHECK(b.components[n].item() == doctest::Approx(c).epsilon(1e-6));
      sum += c;
    }
    const double ce = cross_entropy(s.logits, y).item();
    CHECK(b.total.item() == doctest::Approx(ce + p.beta * sum).epsilon(1e-5));

    const std::span<const ForwardOutput> one(teachers.data(), 1);
    const std::span<Network* const> one_ntl(ntls.data(), 1);
    const LossBreakdown single = pfeed_total(s, one, one_ntl, y, p);
    CHECK(single.total.item() ==
          doctest::Approx(ce + p.beta * feed_loss(teachers[0].final_map, s.final_map, *ntls[0], p).item())
              .epsilon(1e-5));

    // Identical teachers through identical NTLs contribute identical terms.
    auto twin_a = build_ntl(4, 7), twin_b = build_ntl(4, 7);
    std::vector<ForwardOutput> twins{teachers[0], teachers[0]};
    std::vector<Network*> twin_ntls{twin_a.get(), twin_b.get()};
    const LossBreakdown tb = pfeed_total(s, twins, twin_ntls, y, p);
    CHECK(tb.components[0].item() == tb.components[1].item());

    CHECK_THROWS_AS(pfeed_total(s, teachers, std::span<Network* const>(ntls.data(), 2), y, p),
                    ConfigError);
  }

  TEST_CASE("l1 feature loss") {
    gen::Gen g(30);
    FeatureLossParams p;
    const Tensor xt = g.tensor(Shape{2, 3, 2, 2});
    const Tensor logits = g.tensor(Shape{2, 4});
    const auto y = g.labels(2, 4);
    const double ce = cross_entropy(logits, y).item();
    CHECK(l1_feature_loss(xt, xt, logits, y, p).item() == doctest::Approx(ce));
    // A sign flip doubles every normalized coordinate's distance.
    double expect = 0.0;
    const auto d = oracle::from(xt);
    for (Index i = 0; i < 2; ++i) {
      for (double v : oracle::normalized_row(d, i, 1e-8)) expect += 2.0 * std::abs(v);
    }
    expect /= 2.0;
    CHECK(normalized_l1_distance(xt, scale(xt, -1.0f), p).item() ==
          doctest::Approx(expect).epsilon(1e-5));
    CHECK_THROWS_AS(normalized_l1_distance(xt, g.tensor(Shape{2, 3, 2, 1}), p), DimensionError);
  }

  TEST_CASE("batch normalization scope") {
    gen::Gen g(31);
    FeatureLossParams p;
    p.scope = NormalizeScope::Batch;
    const Tensor xt = g.tensor(Shape{2, 3});
    Tensor xs = xt.clone();
    // Scaling one sample changes a batch-scoped distance but not a per-sample one.
    for (Index j = 0; j < 3; ++j) xs.data()[j] *= 4.0f;
    CHECK(normalized_l1_distance(xt, xs, p).item() > 1e-3);
    p.scope = NormalizeScope::Sample;
    CHECK(normalized_l1_distance(xt, xs, p).item() < 1e-5);
  }

  TEST_CASE("ft losses") {
    gen::Gen g(32);
    FeatureLossParams p;
    auto para = build_paraphraser(4, 0.5, 3);
    auto trans = build_translator(4, 2, 4);
    g.perturb(*para);
    g.perturb(*trans);
    const Tensor xt = g.tensor(Shape{3, 4, 2, 2});
    const Tensor xs = g.tensor(Shape{3, 4, 2, 2});
    const Tensor logits = g.tensor(Shape{3, 5});
    const auto y = g.labels(3, 5);
    const FtLosses f = ft_losses(xt, xs, logits, *para, *trans, y, p, Mode::Eval);
    const auto pp = oracle::params_of(*para);
    const auto factor = oracle::paraphraser_encode(oracle::from(xt), pp, false);
    const auto recon = oracle::paraphraser_decode(factor, pp, false);
    CHECK(f.rec.item() ==
          doctest::Approx(oracle::reconstruction(oracle::from(xt), recon)).epsilon(1e-5));
    const auto fs = oracle::translator(oracle::from(xs), oracle::params_of(*trans));
    const double term = oracle::normalized_distance(factor, fs, 1e-8, 1);
    CHECK(f.term.item() == doctest::Approx(term).epsilon(1e-5));
    CHECK(f.student.item() ==
          doctest::Approx(oracle::cross_entropy(oracle::from(logits), y) + p.beta * term)
              .epsilon(1e-5));
    auto narrow = build_translator(4, 3, 4);
    CHECK_THROWS_AS(ft_losses(xt, xs, logits, *para, *narrow, y, p), DimensionError);
  }

  TEST_CASE("reconstruction loss of a perfect autoencoder is zero") {
    gen::Gen g(33);
    const Tensor x = g.tensor(Shape{2, 3, 2, 2});
    CHECK(reconstruction_loss(x, x.clone()).item() == 0.0f);
  }

  TEST_CASE("positive-scale invariance of normalized terms") {
    gen::Gen g(34);
    FeatureLossParams p;
    const Tensor xt = g.tensor(Shape{2, 4, 2, 2}), xs = g.tensor(Shape{2, 4, 2, 2});
    auto ntl = build_ntl(4, 2);
    for (float c : {0.5f, 3.0f}) {
      CHECK(feed_loss(scale(xt, c), xs, *ntl, p).item() ==
            doctest::Approx(feed_loss(xt, xs, *ntl, p).item()).epsilon(1e-5));
      CHECK(normalized_l1_distance(scale(xt, c), xs, p).item() ==
            doctest::Approx(normalized_l1_distance(xt, xs, p).item()).epsilon(1e-5));
    }
  }

  TEST_CASE("method names") {
    for (auto m : {LossMethod::CE, LossMethod::KD, LossMethod::BAN, LossMethod::AT, LossMethod::L1,
                   LossMethod::FT, LossMethod::FEED}) {
      CHECK(parse_loss_method(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_loss_method("nst"), ConfigError);
  }

  TEST_CASE("teacher side receives no gradient") {
    gen::Gen g(35);
    FeatureLossParams p;
    const auto y = g.labels(2, 5);
    Tensor s = g.tensor(Shape{2, 5}), t = g.tensor(Shape{2, 5});
    s.set_requires_grad(true);
    t.set_requires_grad(true);
    backward(kd_loss(s, t, y, KdParams{}));
    backward(ban_loss(s, t, y));
    CHECK(s.has_grad());
    CHECK_FALSE(t.has_grad());
    Tensor fs = g.tensor(Shape{2, 3, 2, 2}), ft = g.tensor(Shape{2, 3, 2, 2});
    fs.set_requires_grad(true);
    ft.set_requires_grad(true);
    auto ntl = build_ntl(3, 0);
    backward(feed_loss(ft, fs, *ntl, p));
    backward(normalized_l1_distance(ft, fs, p));
    CHECK(fs.has_grad());
    CHECK_FALSE(ft.has_grad());
    for (const auto& e : ntl->parameters()) CHECK(e.tensor.has_grad());
  }

  TEST_CASE("every loss passes grad_check") {
    gen::Gen g(36);
    FeatureLossParams p;
    p.beta = 0.5f;
    for (int trial = 0; trial < 3; ++trial) {
      const auto y = g.labels(3, 4);
      Tensor s = g.tensor(Shape{3, 4});
      const Tensor t = g.tensor(Shape{3, 4});
      CHECK(grad_check([&](const Tensor& x) { return cross_entropy(x, y); }, s) < kGradTol);
      CHECK(grad_check([&](const Tensor& x) { return kd_loss(x, t, y, KdParams{0.6f, 3.0f}); }, s) <
            kGradTol);
      CHECK(grad_check([&](const Tensor& x) { return ban_loss(x, t, y); }, s) < kGradTol);

      ForwardOutput so = taps(g, 3, 2, 2, 4);
      const ForwardOutput to = taps(g, 3, 2, 3, 4);
      so.logits = g.tensor(Shape{3, 4});
      std::vector<Tensor> inputs{so.logits};
      for (auto& [name, a] : so.groups) inputs.push_back(a);
      CHECK(grad_check([&] { return at_loss(so, to, y, p); }, inputs) < kGradTol);

      // Redraw until every L1 coordinate sits clear of its kink.
      Tensor fs, ft, ft2;
      auto ntl = build_ntl(3, 100 + trial);
      auto ntl2 = build_ntl(3, 200 + trial);
      g.perturb(*ntl);
      g.perturb(*ntl2);
      for (;;) {
        fs = g.tensor(Shape{3, 3, 2, 2});
        ft = g.tensor(Shape{3, 3, 2, 2});
        ft2 = g.tensor(Shape{3, 3, 2, 2});
        const auto s_d = oracle::from(fs);
        double relu = INFINITY;
        const auto m1 = oracle::ntl(s_d, oracle::params_of(*ntl), &relu);
        const auto m2 = oracle::ntl(s_d, oracle::params_of(*ntl2), &relu);
        if (relu > kReluMargin && oracle::l1_margin(oracle::from(ft), s_d) > kKinkMargin &&
            oracle::l1_margin(oracle::from(ft), m1) > kKinkMargin &&
            oracle::l1_margin(oracle::from(ft2), m2) > kKinkMargin) {
          break;
        }
      }
      CHECK(grad_check([&] { return l1_feature_loss(ft, fs, so.logits, y, p); }, {fs, so.logits}) <
            kGradTol);

      std::vector<Tensor> ntl_inputs{fs};
      for (const Tensor& w : ntl->parameter_tensors()) ntl_inputs.push_back(w);
      CHECK(grad_check([&] { return feed_loss(ft, fs, *ntl, p); }, ntl_inputs) < kGradTol);

      ForwardOutput sf;
      sf.logits = so.logits;
      sf.final_map = fs;
      std::vector<ForwardOutput> teachers(2);
      teachers[0].final_map = ft;
      teachers[1].final_map = ft2;
      std::vector<Network*> ntls{ntl.get(), ntl2.get()};
      CHECK(grad_check([&] { return pfeed_total(sf, teachers, ntls, y, p).total; },
                       {fs, so.logits}) < kGradTol);

      auto para = build_paraphraser(3, 0.67, 300 + trial);
      auto trans = build_translator(3, para->factor_channels(), 400 + trial);
      g.perturb(*para);
      g.perturb(*trans);
      para->set_frozen(true);
      Tensor xs;
      const auto factor =
          oracle::paraphraser_encode(oracle::from(ft), oracle::params_of(*para), false);
      for (;;) {
        xs = g.tensor(Shape{3, 3, 2, 2});
        double relu = INFINITY;
        const auto mapped = oracle::translator(oracle::from(xs), oracle::params_of(*trans), &relu);
        if (relu > kReluMargin && oracle::l1_margin(factor, mapped) > kKinkMargin) break;
      }
      std::vector<Tensor> ft_inputs{xs, so.logits};
      for (const Tensor& w : trans->parameter_tensors()) ft_inputs.push_back(w);
      CHECK(grad_check([&] { return ft_losses(ft, xs, so.logits, *para, *trans, y, p).student; },
                       ft_inputs) < kGradTol);

      // Reconstruction w.r.t. the paraphraser, with running statistics; batch
      // statistics on 12 values per channel sit at the float noise floor.
      auto para2 = build_paraphraser(3, 0.67, 500 + trial);
      g.perturb(*para2, 0.1f);
      // A smaller output layer keeps the reconstruction near unit scale.
      for (const auto& e : para2->parameters()) {
        if (e.name.starts_with("decoder.conv2")) Tensor(e.tensor).data() *= 0.3f;
      }
      Tensor small;
      for (;;) {
        small = g.tensor(Shape{3, 3, 2, 2}, 0.3f);
        const auto pp = oracle::params_of(*para2);
        double relu = INFINITY;
        oracle::paraphraser_decode(oracle::paraphraser_encode(oracle::from(small), pp, false, &relu),
                                   pp, false, &relu);
        if (relu > kReluMargin) break;
      }
      CHECK(grad_check([&] { return ft_losses(small, xs, so.logits, *para2, *trans, y, p).rec; },
                       para2->parameter_tensors()) < kGradTol);
    }
  }
}
