#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "msgcf/autodiff.hpp"
#include "msgcf/error.hpp"
#include "grad_cases.hpp"
#include "oracles.hpp"

using namespace msgcf;
using oracle::gradcheck;
using oracle::project;

namespace {

Tensor run(const std::function<ad::Var(ad::Tape&)>& f) {
  ad::Tape tape;
  return f(tape).value();
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  CHECK(Tensor().rank() == 0);
  CHECK(Tensor().item() == 0.0);
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m(1, 2) == 6.0);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(Tensor(Shape{3, 0}).size() == 0);
  CHECK(transpose(m)(2, 1) == 6.0);
  CHECK_THROWS_AS(m.item(), DimensionError);
}

TEST_CASE("matmul") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), a) == a);
  CHECK(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})).item() == 11.0);
  CHECK_THROWS_AS(matmul(a, Tensor::matrix({{1, 2, 3}})), DimensionError);

  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({5, 4}, rng), y = oracle::random_tensor({4, 3}, rng);
  CHECK(max_abs_diff(matmul(x, y), oracle::naive_matmul(x, y)) <= 1e-12);

  SUBCASE("transposed accumulation variants agree with the naive product") {
    const Tensor at = transpose(x), bt = transpose(y);
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb) {
        Tensor c(Shape{5, 3}, 1.0);
        gemm_accumulate(ta ? at : x, ta, tb ? bt : y, tb, c);
        Tensor want = oracle::naive_matmul(x, y);
        for (double& v : want.data()) v += 1.0;
        CHECK(max_abs_diff(c, want) <= 1e-12);
      }
  }
}

TEST_CASE("relu and softplus values") {
  const Tensor r = run([](ad::Tape& t) { return ad::relu(t.constant(Tensor::vector({-1, 2}))); });
  CHECK(r == Tensor::vector({0, 2}));
  const Tensor z = run([](ad::Tape& t) { return ad::relu(t.constant(Tensor::vector({-3, -0.5, -2}))); });
  CHECK(z == Tensor(Shape{3}));
  CHECK(ad::softplus_value(0.0) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(std::abs(ad::softplus_value(50.0) - 50.0) <= 1e-9);
  CHECK(std::isfinite(ad::softplus_value(1000.0)));
  CHECK(ad::softplus_value(-1000.0) >= 0.0);
}

TEST_CASE("relu gradient is the positivity indicator") {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::vector({-1, 2}));
  const ad::GradientMap g = ad::backward(tape, ad::sum(ad::relu(x)));
  CHECK(g.at(x.id()) == Tensor::vector({0, 1}));
}

TEST_CASE("relu subgradient at zero is zero") {
  ad::Tape tape;
  const ad::Var x = tape.parameter(Tensor::vector({0.0}));
  CHECK(ad::backward(tape, ad::sum(ad::relu(x))).at(x.id())[0] == 0.0);
}

TEST_CASE("concat_cols") {
  const Tensor c = run([](ad::Tape& t) {
    return ad::concat_cols(t.constant(Tensor::matrix({{1}})), t.constant(Tensor::matrix({{2}})));
  });
  CHECK(c == Tensor::matrix({{1, 2}}));
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(run([&](ad::Tape& t) { return ad::concat_cols(t.constant(a), t.constant(Tensor(Shape{2, 0}))); }) == a);
  ad::Tape tape;
  const ad::Var pa = tape.parameter(a), pb = tape.parameter(Tensor(Shape{2, 3}));
  const auto g = ad::backward(tape, ad::sum(ad::concat_cols(pa, pb)));
  CHECK(g.at(pa.id()) == Tensor(Shape{2, 2}, 1.0));
  CHECK(g.at(pb.id()) == Tensor(Shape{2, 3}, 1.0));
  CHECK_THROWS_AS(ad::concat_cols(pa, tape.constant(Tensor(Shape{3, 1}))), DimensionError);
}

TEST_CASE("hadamard") {
  const Tensor a = Tensor::vector({2, 3});
  CHECK(run([&](ad::Tape& t) { return ad::hadamard(t.constant(a), t.constant(Tensor(Shape{2}, 1.0))); }) == a);
  CHECK(run([&](ad::Tape& t) { return ad::hadamard(t.constant(a), t.constant(Tensor::vector({4, 5}))); }) ==
        Tensor::vector({8, 15}));
  ad::Tape tape;
  CHECK_THROWS_AS(ad::hadamard(tape.constant(a), tape.constant(Tensor(Shape{3}))), DimensionError);
}

TEST_CASE("conv2d") {
  SUBCASE("unit 1x1 kernel is the identity") {
    std::mt19937_64 rng(3);
    const Tensor x = oracle::random_tensor({1, 4, 5}, rng);
    const Tensor y = ad::conv2d_forward(x, Tensor(Shape{1, 1, 1, 1}, 1.0), Tensor(Shape{1}));
    CHECK(y == x);
  }
  SUBCASE("hand sum") {
    const Tensor y = ad::conv2d_forward(Tensor(Shape{1, 3, 3}, 1.0), Tensor(Shape{1, 1, 2, 2}, 1.0), Tensor(Shape{1}));
    CHECK(y == Tensor(Shape{1, 2, 2}, 4.0));
  }
  SUBCASE("cross-correlation orientation and bias") {
    Tensor x(Shape{1, 2, 2});
    x(0, 0, 0) = 1;
    x(0, 0, 1) = 2;
    x(0, 1, 0) = 3;
    x(0, 1, 1) = 4;
    Tensor k(Shape{1, 1, 2, 2});
    k[0] = 1;  // top-left tap only
    const Tensor y = ad::conv2d_forward(x, k, Tensor::vector({0.5}));
    CHECK(y.item() == 1.5);
  }
  SUBCASE("kernel larger than input") {
    CHECK_THROWS_AS(ad::conv2d_forward(Tensor(Shape{1, 2, 2}), Tensor(Shape{1, 1, 3, 3}), Tensor(Shape{1})),
                    DimensionError);
  }
}

TEST_CASE("maxpool2") {
  const Tensor y = run([](ad::Tape& t) { return ad::maxpool2(t.constant(Tensor(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4}))); });
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y.item() == 4.0);
  CHECK(run([](ad::Tape& t) { return ad::maxpool2(t.constant(Tensor(Shape{1, 5, 5}))); }).shape() == Shape{1, 2, 2});

  SUBCASE("constant input routes gradient to the first window element") {
    ad::Tape tape;
    const ad::Var x = tape.parameter(Tensor(Shape{1, 4, 4}, 7.0));
    const ad::Var p = ad::maxpool2(x);
    CHECK(p.value() == Tensor(Shape{1, 2, 2}, 7.0));
    const Tensor g = ad::backward(tape, ad::sum(p)).at(x.id());
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(g(0, i, j) == ((i % 2 == 0 && j % 2 == 0) ? 1.0 : 0.0));
  }
  SUBCASE("later duplicates of the maximum never take the gradient") {
    for (int pattern = 1; pattern < 8; ++pattern) {
      Tensor x(Shape{1, 2, 2}, 0.0);
      x[0] = 5.0;
      for (int b = 0; b < 3; ++b)
        if (pattern & (1 << b)) x[static_cast<std::size_t>(b + 1)] = 5.0;
      ad::Tape tape;
      const ad::Var v = tape.parameter(x);
      const Tensor g = ad::backward(tape, ad::sum(ad::maxpool2(v))).at(v.id());
      CHECK(g == Tensor(Shape{1, 2, 2}, std::vector<double>{1, 0, 0, 0}));
    }
  }
  SUBCASE("too small") {
    ad::Tape tape;
    CHECK_THROWS_AS(ad::maxpool2(tape.constant(Tensor(Shape{1, 1, 4}))), DimensionError);
  }
}

TEST_CASE("linear") {
  std::mt19937_64 rng(5);
  const Tensor x = oracle::random_tensor({3, 4}, rng);
  CHECK(run([&](ad::Tape& t) {
          return ad::linear(t.constant(x), t.constant(Tensor::identity(4)), t.constant(Tensor(Shape{4})));
        }) == x);
  const Tensor b = Tensor::vector({1, -2});
  const Tensor y =
      run([&](ad::Tape& t) { return ad::linear(t.constant(x), t.constant(Tensor(Shape{4, 2})), t.constant(b)); });
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(y(i, 0) == 1.0);
    CHECK(y(i, 1) == -2.0);
  }
}

TEST_CASE("softmax cross entropy") {
  const std::vector<std::size_t> label0{0};
  const Tensor saturated = Tensor::matrix({{100, 0, 0, 0, 0}});
  CHECK(run([&](ad::Tape& t) { return ad::softmax_cross_entropy(t.constant(saturated), label0); }).item() <= 1e-9);
  const std::vector<std::size_t> labels{0, 3};
  const Tensor uniform(Shape{2, 5}, 0.3);
  CHECK(run([&](ad::Tape& t) { return ad::softmax_cross_entropy(t.constant(uniform), labels); }).item() ==
        doctest::Approx(std::log(5.0)).epsilon(1e-14));
  ad::Tape tape;
  const std::vector<std::size_t> bad{5};
  CHECK_THROWS_AS(ad::softmax_cross_entropy(tape.constant(saturated), bad), IndexError);

  SUBCASE("backward is (softmax - onehot) / n") {
    std::mt19937_64 rng(8);
    const Tensor logits = oracle::random_tensor({4, 5}, rng, -3, 3);
    const std::vector<std::size_t> y{1, 4, 0, 2};
    ad::Tape tp;
    const ad::Var v = tp.parameter(logits);
    const Tensor g = ad::backward(tp, ad::softmax_cross_entropy(v, y)).at(v.id());
    for (std::size_t i = 0; i < 4; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < 5; ++j) z += std::exp(logits(i, j));
      for (std::size_t j = 0; j < 5; ++j) {
        const double want = (std::exp(logits(i, j)) / z - (j == y[i] ? 1.0 : 0.0)) / 4.0;
        CHECK(g(i, j) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("backward contract and simple identities") {
  ad::Tape tape;
  std::mt19937_64 rng(2);
  const Tensor pv = oracle::random_tensor({3, 2}, rng);
  const ad::Var p = tape.parameter(pv);
  const ad::Var q = tape.parameter(Tensor(Shape{4}));
  const ad::Var c = tape.constant(pv);
  CHECK_THROWS_AS(ad::backward(tape, p), ContractError);

  const ad::GradientMap g1 = ad::backward(tape, ad::sum(p));
  CHECK(g1.at(p.id()) == Tensor(Shape{3, 2}, 1.0));
  CHECK(g1.at(q.id()) == Tensor(Shape{4}));  // unreachable parameter still gets zeros
  CHECK(g1.count(c.id()) == 0);
  CHECK(g1.size() == 2);

  const ad::GradientMap g2 = ad::backward(tape, ad::scale(ad::sum(ad::hadamard(p, p)), 0.5));
  CHECK(max_abs_diff(g2.at(p.id()), pv) <= 1e-15);
}

TEST_CASE("backward is linear in the root") {
  std::mt19937_64 rng(4);
  const Tensor pv = oracle::random_tensor({3, 3}, rng);
  const double alpha = 0.7, beta = -1.3;
  auto f = [](ad::Var p) { return ad::sum(ad::softplus(ad::matmul(p, p))); };
  auto g = [](ad::Var p) { return ad::sum(ad::relu(ad::hadamard(p, p))); };
  ad::Tape t1, t2, t3;
  const ad::Var p1 = t1.parameter(pv), p2 = t2.parameter(pv), p3 = t3.parameter(pv);
  const Tensor gf = ad::backward(t1, f(p1)).at(p1.id());
  const Tensor gg = ad::backward(t2, g(p2)).at(p2.id());
  const Tensor gc = ad::backward(t3, ad::add(ad::scale(f(p3), alpha), ad::scale(g(p3), beta))).at(p3.id());
  CHECK(max_abs_diff(gc, add(scale(gf, alpha), scale(gg, beta))) <= 1e-12);
}

TEST_CASE("identical tapes give bit-identical gradients") {
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_tensor({2, 6, 6}, rng), k = oracle::random_tensor({3, 2, 3, 3}, rng);
  auto once = [&] {
    ad::Tape t;
    const ad::Var xv = t.parameter(x), kv = t.parameter(k), bv = t.parameter(Tensor(Shape{3}));
    const ad::Var out = ad::sum(ad::softplus(ad::maxpool2(ad::conv2d(xv, kv, bv))));
    return std::make_pair(out.value(), ad::backward(t, out).at(kv.id()));
  };
  CHECK(once() == once());
}

TEST_CASE("finite-difference fidelity of every differentiable primitive") {
  constexpr double tol = 1e-5;
  for (std::uint64_t point = 0; point < 10; ++point) {
    CAPTURE(point);
    std::mt19937_64 rng(100 + point);
    for (const auto& c : oracle::primitive_grad_cases(rng)) {
      CAPTURE(c.name);
      const auto r = gradcheck(c.f, c.inputs);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error <= tol);
    }
  }
}
