#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "msgcf/error.hpp"
#include "msgcf/graph_spectral.hpp"
#include "oracles.hpp"

using namespace msgcf;
using namespace msgcf::graph;

namespace {

Tensor sorted_eigs(const Tensor& m) { return eigendecompose(m).eigenvalues; }

Tensor chebyshev_operator(const Tensor& l_sym, double lmax) {
  Tensor lbar = scale(l_sym, 2.0 / lmax);
  for (std::size_t i = 0; i < lbar.dim(0); ++i) lbar(i, i) -= 1.0;
  return lbar;
}

}  // namespace

TEST_CASE("adjacency validation") {
  CHECK_THROWS_AS(Adjacency(Tensor::matrix({{0, 1}, {2, 0}})), ContractError);
  CHECK_THROWS_AS(Adjacency(Tensor::matrix({{1, 0}, {0, 0}})), ContractError);
  CHECK_THROWS_AS(Adjacency(Tensor::matrix({{0, -1}, {-1, 0}})), ContractError);
  CHECK_THROWS_AS(Adjacency(Tensor(Shape{2, 3})), DimensionError);
}

TEST_CASE("degree") {
  CHECK(degree(Adjacency(Tensor::matrix({{0, 1}, {1, 0}}))) == Tensor::vector({1, 1}));
  CHECK(degree(Adjacency(Tensor::matrix({{0, 2, 0}, {2, 0, 1}, {0, 1, 0}}))) == Tensor::vector({2, 3, 1}));
  CHECK(degree(Adjacency(Tensor(Shape{3, 3}))) == Tensor(Shape{3}));
}

TEST_CASE("laplacian") {
  CHECK(laplacian(path_graph(2)) == Tensor::matrix({{1, -1}, {-1, 1}}));
  const Tensor e = sorted_eigs(laplacian(path_graph(3)));
  CHECK(e[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e[2] == doctest::Approx(3.0).epsilon(1e-12));
  std::mt19937_64 rng(3);
  const Tensor l = laplacian(random_connected_graph(9, 0.3, rng));
  const Tensor ones(Shape{9, 1}, 1.0);
  CHECK(oracle::frob(oracle::naive_matmul(l, ones)) <= 1e-12);
}

TEST_CASE("symmetric normalized laplacian") {
  const Propagation two = sym_laplacian(path_graph(2));
  CHECK(two.kind == PropagationKind::raw_sym_laplacian);
  CHECK(max_abs_diff(two.matrix, Tensor::matrix({{1, -1}, {-1, 1}})) <= 1e-15);
  const Tensor e = sorted_eigs(two.matrix);
  CHECK(std::abs(e[0]) <= 1e-12);
  CHECK(e[1] == doctest::Approx(2.0).epsilon(1e-12));

  SUBCASE("regular graph equals L / d") {
    const Adjacency c = cycle_graph(7);
    CHECK(max_abs_diff(sym_laplacian(c).matrix, scale(laplacian(c), 0.5)) <= 1e-15);
    const Adjacency k = complete_graph(5);
    CHECK(max_abs_diff(sym_laplacian(k).matrix, scale(laplacian(k), 0.25)) <= 1e-15);
  }
  SUBCASE("isolated node") {
    CHECK_THROWS_AS(sym_laplacian(Adjacency(Tensor::matrix({{0, 1, 0}, {1, 0, 0}, {0, 0, 0}}))),
                    DegenerateDegreeError);
  }
}

TEST_CASE("eigendecompose") {
  SUBCASE("diagonal input") {
    Tensor d(Shape{4, 4});
    const double diag[] = {3.0, -1.0, 2.0, 0.5};
    for (std::size_t i = 0; i < 4; ++i) d(i, i) = diag[i];
    const SpectralBasis b = eigendecompose(d);
    CHECK(b.eigenvalues == Tensor::vector({-1.0, 0.5, 2.0, 3.0}));
    for (std::size_t i = 0; i < 4; ++i) {
      std::size_t nonzero = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        const double v = std::abs(b.eigenvectors(i, j));
        CHECK((v == doctest::Approx(0.0) || v == doctest::Approx(1.0)));
        nonzero += v > 0.5;
      }
      CHECK(nonzero == 1);
    }
  }
  SUBCASE("two-node path") {
    const SpectralBasis b = eigendecompose(laplacian(path_graph(2)));
    CHECK(std::abs(b.eigenvalues[0]) <= 1e-14);
    CHECK(b.eigenvalues[1] == doctest::Approx(2.0));
    CHECK(std::abs(b.eigenvectors(0, 0) - b.eigenvectors(1, 0)) <= 1e-14);
  }
  SUBCASE("random symmetric matrices reconstruct") {
    std::mt19937_64 rng(11);
    for (std::size_t n : {1, 2, 5, 8, 16, 40}) {
      Tensor a = oracle::random_tensor({n, n}, rng, -2, 2);
      a = scale(add(a, transpose(a)), 0.5);
      const SpectralBasis b = eigendecompose(a);
      Tensor lambda(Shape{n, n});
      for (std::size_t i = 0; i < n; ++i) lambda(i, i) = b.eigenvalues[i];
      const Tensor rec = oracle::naive_matmul(oracle::naive_matmul(b.eigenvectors, lambda), transpose(b.eigenvectors));
      CHECK(oracle::frob(subtract(rec, a)) <= 1e-8 * std::max(1.0, oracle::frob(a)));
      const Tensor utu = oracle::naive_matmul(transpose(b.eigenvectors), b.eigenvectors);
      CHECK(max_abs_diff(utu, oracle::identity(n)) <= 1e-10);
      for (std::size_t i = 1; i < n; ++i) CHECK(b.eigenvalues[i - 1] <= b.eigenvalues[i]);
      for (std::size_t i = 0; i < n; ++i) {
        Tensor v(Shape{n, 1});
        for (std::size_t r = 0; r < n; ++r) v[r] = b.eigenvectors(r, i);
        CHECK(oracle::frob(subtract(oracle::naive_matmul(a, v), scale(v, b.eigenvalues[i]))) <= 1e-8);
      }
    }
  }
  SUBCASE("contract violations") {
    CHECK_THROWS_AS(eigendecompose(Tensor::matrix({{0, 1}, {0.5, 0}})), ContractError);
    CHECK_THROWS_AS(eigendecompose(Tensor(Shape{5, 5}), 4), ContractError);
  }
}

TEST_CASE("graph Fourier transform") {
  std::mt19937_64 rng(21);
  const Adjacency a = random_connected_graph(10, 0.3, rng);
  const SpectralBasis b = eigendecompose(laplacian(a));
  Tensor v1(Shape{10, 1});
  for (std::size_t r = 0; r < 10; ++r) v1[r] = b.eigenvectors(r, 1);
  const Tensor spec = gft(b, v1);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(spec[i] - (i == 1 ? 1.0 : 0.0)) <= 1e-10);
  CHECK(max_abs_diff(igft(b, spec), v1) <= 1e-10);
  CHECK(gft(b, Tensor(Shape{10, 3})) == Tensor(Shape{10, 3}));

  const Tensor x = oracle::random_tensor({10, 3}, rng);
  const Tensor xt = gft(b, x);
  CHECK(std::abs(oracle::frob(xt) - oracle::frob(x)) <= 1e-10);
  CHECK(max_abs_diff(igft(b, gft(b, x)), x) <= 1e-10);
  CHECK(max_abs_diff(gft(b, igft(b, x)), x) <= 1e-10);
  const Tensor y = oracle::random_tensor({10, 3}, rng);
  CHECK(max_abs_diff(igft(b, add(x, y)), add(igft(b, x), igft(b, y))) <= 1e-12);
  CHECK_THROWS_AS(gft(b, Tensor(Shape{9, 1})), DimensionError);
}

TEST_CASE("filter_by_response") {
  std::mt19937_64 rng(31);
  const Tensor l = laplacian(random_connected_graph(8, 0.4, rng));
  const Tensor x = oracle::random_tensor({8, 2}, rng);
  CHECK(max_abs_diff(filter_by_response(l, [](double) { return 1.0; }, x), x) <= 1e-10);
  CHECK(max_abs_diff(filter_by_response(l, [](double s) { return s; }, x), oracle::naive_matmul(l, x)) <= 1e-10);
  CHECK(max_abs_diff(filter_by_response(l, [](double s) { return s * s; }, x),
                     oracle::naive_matmul(l, oracle::naive_matmul(l, x))) <= 1e-9);
}

TEST_CASE("poly_filter") {
  std::mt19937_64 rng(41);
  const Tensor l = sym_laplacian(random_connected_graph(6, 0.5, rng)).matrix;
  const Tensor x = oracle::random_tensor({6, 3}, rng);
  CHECK(max_abs_diff(poly_filter(l, Tensor::vector({1}), x), x) <= 1e-15);
  CHECK(max_abs_diff(poly_filter(l, Tensor::vector({0, 1}), x), oracle::naive_matmul(l, x)) <= 1e-14);
  const Tensor y = poly_filter(l, Tensor::vector({1, -2, 1}), x);
  const Tensor want = filter_by_response(l, [](double s) { return 1 - 2 * s + s * s; }, x);
  CHECK(oracle::rel_frob_error(y, want) <= 1e-9);
}

TEST_CASE("cheb_eval") {
  CHECK(cheb_eval(0, 0.7) == 1.0);
  CHECK(cheb_eval(1, 0.7) == 0.7);
  CHECK(cheb_eval(2, 0.5) == doctest::Approx(-0.5).epsilon(1e-15));
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, std::numbers::pi);
  for (int i = 0; i < 20; ++i) {
    const double phi = u(rng);
    CHECK(std::abs(cheb_eval(5, std::cos(phi)) - std::cos(5 * phi)) <= 1e-12);
  }
}

TEST_CASE("cheb_filter") {
  std::mt19937_64 rng(61);
  const Propagation ls = sym_laplacian(random_connected_graph(8, 0.35, rng));
  const double lmax = lambda_max(ls.matrix);
  const Tensor x = oracle::random_tensor({8, 2}, rng);
  CHECK(max_abs_diff(cheb_filter(ls, ChebCoeffs(Tensor::vector({2.5}), lmax), x), scale(x, 2.5)) <= 1e-15);
  const Tensor lbar = chebyshev_operator(ls.matrix, lmax);
  CHECK(max_abs_diff(cheb_filter(ls, ChebCoeffs(Tensor::vector({0, 1}), lmax), x), oracle::naive_matmul(lbar, x)) <=
        1e-13);

  const std::vector<double> theta{0.3, -1.1, 0.8, 0.45};
  const Tensor y = cheb_filter(ls, ChebCoeffs(Tensor(Shape{4}, theta), lmax), x);
  const Tensor oracle_y = oracle::naive_matmul(oracle::explicit_chebyshev_matrix(lbar, theta), x);
  CHECK(oracle::rel_frob_error(y, oracle_y) <= 1e-8);
  const Tensor eig_y = filter_by_response(
      ls.matrix,
      [&](double s) {
        double h = 0;
        for (std::size_t k = 0; k < theta.size(); ++k) h += theta[k] * std::cos(k * std::acos(std::clamp(2 * s / lmax - 1, -1.0, 1.0)));
        return h;
      },
      x);
  CHECK(oracle::rel_frob_error(y, eig_y) <= 1e-8);

  CHECK_THROWS_AS(ChebCoeffs(Tensor::vector({1}), 0.0), ContractError);
  CHECK_THROWS_AS(ChebCoeffs(Tensor::vector({1}), -1.0), ContractError);
  CHECK_THROWS_AS(cheb_filter(renormalized_propagation(path_graph(3)), ChebCoeffs(Tensor::vector({1}), 2.0),
                              Tensor(Shape{3, 1})),
                  ContractError);
}

TEST_CASE("lambda_max matches power iteration") {
  std::mt19937_64 rng(71);
  for (int i = 0; i < 5; ++i) {
    const Tensor l = laplacian(random_connected_graph(10, 0.3, rng));
    CHECK(lambda_max(l) == doctest::Approx(oracle::power_iteration(l)).epsilon(1e-8));
  }
}

TEST_CASE("renormalized propagation") {
  const Propagation two = renormalized_propagation(path_graph(2));
  CHECK(two.kind == PropagationKind::renormalized);
  CHECK(max_abs_diff(two.matrix, Tensor(Shape{2, 2}, 0.5)) <= 1e-15);
  const Tensor e = sorted_eigs(two.matrix);
  CHECK(std::abs(e[0]) <= 1e-14);
  CHECK(e[1] == doctest::Approx(1.0));
  CHECK(max_abs_diff(renormalized_propagation(complete_graph(6)).matrix, Tensor(Shape{6, 6}, 1.0 / 6.0)) <= 1e-15);
  CHECK(renormalized_propagation(Adjacency(Tensor(Shape{1, 1}))).matrix == Tensor::matrix({{1}}));
}

TEST_CASE("gcn_propagate") {
  std::mt19937_64 rng(81);
  const Tensor x = oracle::random_tensor({5, 3}, rng);
  const Propagation ident{Tensor::identity(5), PropagationKind::renormalized};
  CHECK(gcn_propagate(ident, x, Tensor::identity(3), false) == x);
  const Tensor theta = oracle::random_tensor({3, 2}, rng);
  const Tensor y = gcn_propagate(renormalized_propagation(complete_graph(5)), x, theta, true);
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(y(i, j) - y(0, j)) <= 1e-14);
  const Propagation p = renormalized_propagation(random_connected_graph(5, 0.5, rng));
  const Tensor chain = oracle::naive_matmul(oracle::naive_matmul(p.matrix, x), theta);
  CHECK(max_abs_diff(gcn_propagate(p, x, theta, false), chain) <= 1e-12);
  Tensor relu_chain = chain;
  for (double& v : relu_chain.data()) v = std::max(v, 0.0);
  CHECK(max_abs_diff(gcn_propagate(p, x, theta, true), relu_chain) <= 1e-12);
  CHECK_THROWS_AS(gcn_propagate(p, x, Tensor(Shape{2, 2}), false), DimensionError);
}

TEST_CASE("differentiable renormalization matches the plain path and finite differences") {
  std::mt19937_64 rng(91);
  const Adjacency a = random_connected_graph(6, 0.5, rng);
  ad::Tape tape;
  const ad::Var p = renormalized_propagation(tape.constant(a.matrix()));
  CHECK(max_abs_diff(p.value(), renormalized_propagation(a).matrix) <= 1e-15);
  for (int point = 0; point < 10; ++point) {
    Tensor w = oracle::random_tensor({5, 5}, rng, 0.1, 2.0);
    w = scale(add(w, transpose(w)), 0.5);
    for (std::size_t i = 0; i < 5; ++i) w(i, i) = 0.0;
    const auto r = oracle::gradcheck(
        [](ad::Tape& t, const std::vector<ad::Var>& v) { return oracle::project(t, renormalized_propagation(v[0])); },
        {w});
    CHECK(r.max_rel_error <= 1e-5);
    const auto g = oracle::gradcheck(
        [](ad::Tape& t, const std::vector<ad::Var>& v) {
          return oracle::project(t, gcn_propagate(v[0], v[1], v[2], false));
        },
        {renormalized_propagation(Adjacency(w)).matrix, oracle::random_tensor({5, 3}, rng),
         oracle::random_tensor({3, 2}, rng)});
    CHECK(g.max_rel_error <= 1e-5);
  }
}

TEST_CASE("eigenvalue ranges on random connected graphs") {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> size(2, 16);
  std::uniform_real_distribution<double> density(0.05, 0.9);
  for (int g = 0; g < 100; ++g) {
    const Adjacency a = random_connected_graph(size(rng), density(rng), rng);
    const Tensor el = sorted_eigs(laplacian(a));
    CHECK(el[0] >= -1e-9);
    const Tensor es = sorted_eigs(sym_laplacian(a).matrix);
    CHECK(es[0] >= -1e-9);
    CHECK(es[es.size() - 1] <= 2.0 + 1e-9);
    const Tensor ep = sorted_eigs(renormalized_propagation(a).matrix);
    CHECK(ep[0] >= -1.0 - 1e-9);
    CHECK(ep[ep.size() - 1] <= 1.0 + 1e-9);
  }
}

TEST_CASE("averaging never widens a single-channel signal's range") {
  std::mt19937_64 rng(111);
  for (int i = 0; i < 50; ++i) {
    const Adjacency a = random_connected_graph(8, 0.4, rng);
    const Tensor m = a.matrix();
    // Row-stochastic form D~^{-1}(A + I), similar to the symmetric propagation.
    Tensor p(Shape{8, 8});
    for (std::size_t r = 0; r < 8; ++r) {
      double d = 1.0;
      for (std::size_t c = 0; c < 8; ++c) d += m(r, c);
      for (std::size_t c = 0; c < 8; ++c) p(r, c) = (m(r, c) + (r == c ? 1.0 : 0.0)) / d;
    }
    const Tensor x = oracle::random_tensor({8, 1}, rng);
    const Tensor y = gcn_propagate(Propagation{p, PropagationKind::renormalized}, x, Tensor::identity(1), false);
    auto range = [](const Tensor& t) {
      const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
      return *hi - *lo;
    };
    CHECK(range(y) <= range(x) + 1e-12);
  }
}

TEST_CASE("graph builders") {
  CHECK(path_graph(3).matrix() == Tensor::matrix({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}));
  CHECK(degree(cycle_graph(5)) == Tensor(Shape{5}, 2.0));
  CHECK(degree(complete_graph(4)) == Tensor(Shape{4}, 3.0));
  CHECK_THROWS_AS(cycle_graph(2), ContractError);
  CHECK(random_er_graph(12, 0.3, 5).matrix() == random_er_graph(12, 0.3, 5).matrix());
}
