#include <cmath>
#include <limits>

#include "doctest.h"
#include "feed/errors.hpp"
#include "feed/ops.hpp"
#include "support/gen.hpp"

using namespace feed;

TEST_SUITE("tensor") {
  TEST_CASE("shape basics") {
    const Shape s{2, 3, 4};
    CHECK(s.rank() == 3);
    CHECK(s.numel() == 24);
    CHECK(s.str() == "[2,3,4]");
    CHECK(Shape{}.numel() == 1);
    CHECK(Tensor::scalar(2.5f).item() == 2.5f);
    CHECK_THROWS_AS(Tensor::from(Shape{2, 2}, {1, 2, 3}), DimensionError);
  }

  TEST_CASE("gradient of a sum is all ones") {
    gen::Gen g(1);
    Tensor x = g.tensor(Shape{3, 5});
    x.set_requires_grad(true);
    backward(sum(x));
    REQUIRE(x.has_grad());
    for (Index i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == 1.0f);
  }

  TEST_CASE("gradient of a sum of squares is 2x") {
    gen::Gen g(2);
    Tensor x = g.tensor(Shape{7});
    x.set_requires_grad(true);
    backward(sum(square(x)));
    for (Index i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(2.0f * x.data()[i]));
  }

  TEST_CASE("repeated backward accumulates until reset") {
    Tensor x = Tensor::from(Shape{2}, {1.0f, -2.0f});
    x.set_requires_grad(true);
    backward(sum(x));
    backward(sum(x));
    CHECK(x.grad()[0] == 2.0f);
    x.zero_grad();
    CHECK_FALSE(x.has_grad());
  }

  TEST_CASE("shared subexpressions sum their contributions") {
    Tensor x = Tensor::from(Shape{1}, {3.0f});
    x.set_requires_grad(true);
    const Tensor y = mul(x, x);
    backward(sum(add(y, y)));
    CHECK(x.grad()[0] == doctest::Approx(12.0f));
  }

  TEST_CASE("non-scalar loss is rejected") {
    Tensor x = Tensor::ones(Shape{2});
    x.set_requires_grad(true);
    CHECK_THROWS_AS(backward(scale(x, 2.0f)), ContractError);
  }

  TEST_CASE("no-grad mode records nothing") {
    Tensor x = Tensor::ones(Shape{2});
    x.set_requires_grad(true);
    NoGradGuard guard;
    const Tensor y = sum(x);
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
  }

  TEST_CASE("non-finite results from finite inputs raise") {
    const Tensor big = Tensor::full(Shape{2}, 3e38f);
    CHECK_THROWS_AS(add(big, big), NumericError);
  }

  TEST_CASE("graph trace is topological") {
    Tensor a = Tensor::ones(Shape{2});
    a.set_requires_grad(true);
    const Tensor b = relu(a);
    const Tensor c = sum(mul(b, a));
    const Graph g = Graph::trace(c);
    CHECK(g.size() == 3);
    CHECK(g.nodes().back()->name == "sum");
  }

  TEST_CASE("turning off requires_grad clears the gradient") {
    Tensor x = Tensor::ones(Shape{2});
    x.set_requires_grad(true);
    backward(sum(x));
    x.set_requires_grad(false);
    CHECK_FALSE(x.has_grad());
  }
}
