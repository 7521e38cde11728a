#include "doctest.h"
#include "feed/errors.hpp"
#include "feed/ops.hpp"
#include "feed/optim.hpp"

using namespace feed;

namespace {

// Leaves grad(p) == c.
void set_grad(Tensor& p, const Tensor& c) {
  p.zero_grad();
  backward(sum(mul(p, c)));
}

}  // namespace

TEST_SUITE("optim") {
  TEST_CASE("sgd follows the momentum recurrence") {
    Tensor p = Tensor::from(Shape{2}, {1.0f, -2.0f});
    p.set_requires_grad(true);
    const Tensor g = Tensor::from(Shape{2}, {2.0f, 0.5f});
    Sgd opt({p}, 0.9f, 0.1f);
    double ref[2] = {1.0, -2.0}, v[2] = {0.0, 0.0};
    for (int step = 0; step < 4; ++step) {
      set_grad(p, g);
      opt.step(0.1f);
      for (int i = 0; i < 2; ++i) {
        const double gi = g.data()[i] + 0.1 * ref[i];
        v[i] = 0.9 * v[i] + gi;
        ref[i] -= 0.1 * v[i];
        CHECK(p.data()[i] == doctest::Approx(ref[i]).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("zero lr and parameters without gradient stay put") {
    Tensor a = Tensor::from(Shape{1}, {3.0f});
    Tensor b = Tensor::from(Shape{1}, {4.0f});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Sgd opt({a, b}, 0.9f, 0.5f);
    set_grad(a, Tensor::from(Shape{1}, {1.0f}));
    opt.step(0.0f);
    CHECK(a.data()[0] == 3.0f);
    opt.step(1.0f);
    CHECK(b.data()[0] == 4.0f);
    CHECK(a.data()[0] != 3.0f);
    opt.zero_grad();
    CHECK_FALSE(a.has_grad());
  }

  TEST_CASE("lr schedule compounds from zero-based milestones") {
    const LrSchedule s(0.1f, {{20, 0.1f}, {30, 0.1f}});
    CHECK(s.at(0) == doctest::Approx(0.1));
    CHECK(s.at(19) == doctest::Approx(0.1));
    CHECK(s.at(20) == doctest::Approx(0.01));
    CHECK(s.at(29) == doctest::Approx(0.01));
    CHECK(s.at(30) == doctest::Approx(0.001));
    CHECK(LrSchedule(0.5f, {}).at(100) == 0.5f);
    CHECK_THROWS_AS(LrSchedule(0.1f, {{30, 0.1f}, {20, 0.1f}}), ParameterError);
  }

  TEST_CASE("milestone parsing") {
    const auto m = LrSchedule::parse_milestones("20:0.1, 30:0.5");
    REQUIRE(m.size() == 2);
    CHECK(m[0].first == 20);
    CHECK(m[1].second == doctest::Approx(0.5));
    CHECK(LrSchedule::parse_milestones("").empty());
    CHECK_THROWS_AS(LrSchedule::parse_milestones("20"), ConfigError);
    CHECK_THROWS_AS(LrSchedule::parse_milestones("a:0.1"), ConfigError);
  }
}
