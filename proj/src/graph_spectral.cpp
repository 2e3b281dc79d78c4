#include "msgcf/graph_spectral.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

namespace msgcf::graph {

Adjacency::Adjacency(Tensor matrix) : matrix_(std::move(matrix)) {
  require_rank(matrix_, 2, "adjacency");
  const std::size_t n = matrix_.dim(0);
  if (matrix_.dim(1) != n) throw DimensionError("adjacency must be square, got " + to_string(matrix_.shape()));
  for (std::size_t i = 0; i < n; ++i) {
    if (matrix_(i, i) != 0.0) throw ContractError("adjacency: nonzero diagonal at node " + std::to_string(i));
    for (std::size_t j = 0; j < n; ++j) {
      const double v = matrix_(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw ContractError("adjacency: entry (" + std::to_string(i) + "," + std::to_string(j) +
                            ") is negative or non-finite");
      }
      if (v != matrix_(j, i)) throw ContractError("adjacency: not symmetric at (" + std::to_string(i) + "," +
                                                  std::to_string(j) + ")");
    }
  }
}

ChebCoeffs::ChebCoeffs(Tensor theta_in, double lmax) : theta(std::move(theta_in)), lambda_max(lmax) {
  require_rank(theta, 1, "chebyshev coefficients");
  if (theta.size() == 0) throw DimensionError("chebyshev coefficients: need at least theta_0");
  if (!(lambda_max > 0.0)) throw ContractError("chebyshev: lambda_max must be positive");
}

Tensor degree(const Adjacency& a) {
  const Tensor& m = a.matrix();
  const std::size_t n = a.nodes();
  Tensor d(Shape{n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i] += m(i, j);
  return d;
}

Tensor laplacian(const Adjacency& a) {
  const Tensor d = degree(a);
  Tensor l = scale(a.matrix(), -1.0);
  for (std::size_t i = 0; i < a.nodes(); ++i) l(i, i) += d[i];
  return l;
}

Propagation sym_laplacian(const Adjacency& a) {
  const Tensor d = degree(a);
  const std::size_t n = a.nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(d[i] > 0.0)) throw DegenerateDegreeError("sym_laplacian: node " + std::to_string(i) + " has zero degree");
    inv_sqrt[i] = 1.0 / std::sqrt(d[i]);
  }
  Tensor l(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      l(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt[i] * a.matrix()(i, j) * inv_sqrt[j];
  return {std::move(l), PropagationKind::raw_sym_laplacian};
}

namespace {

void require_symmetric(const Tensor& m, double tol, const char* what) {
  require_rank(m, 2, what);
  const std::size_t n = m.dim(0);
  if (m.dim(1) != n) throw DimensionError(std::string(what) + ": not square, " + to_string(m.shape()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol) {
        throw ContractError(std::string(what) + ": asymmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
}

void require_rows(const Tensor& x, std::size_t n, const char* what) {
  require_rank(x, 2, what);
  if (x.dim(0) != n) {
    throw DimensionError(std::string(what) + ": signal " + to_string(x.shape()) + " has wrong row count for " +
                         std::to_string(n) + " nodes");
  }
}

}  // namespace

SpectralBasis eigendecompose(const Tensor& m, std::size_t max_nodes) {
  require_symmetric(m, 1e-10, "eigendecompose");
  const std::size_t n = m.dim(0);
  if (n > max_nodes) {
    throw ContractError("eigendecompose: " + std::to_string(n) + " nodes exceeds cap " + std::to_string(max_nodes));
  }
  Tensor a = m;
  // Symmetrize so the rotations see an exactly symmetric matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (m(i, j) + m(j, i));
  Tensor v = Tensor::identity(n);
  const double tol = 1e-12 * frobenius_norm(m);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SpectralBasis basis{Tensor(Shape{n, n}), Tensor(Shape{n})};
  for (std::size_t c = 0; c < n; ++c) {
    basis.eigenvalues[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) basis.eigenvectors(r, c) = v(r, order[c]);
  }
  return basis;
}

Tensor gft(const SpectralBasis& basis, const Tensor& x) {
  require_rows(x, basis.size(), "gft");
  Tensor out(Shape{basis.size(), x.dim(1)});
  gemm_accumulate(basis.eigenvectors, true, x, false, out);
  return out;
}

Tensor igft(const SpectralBasis& basis, const Tensor& xt) {
  require_rows(xt, basis.size(), "igft");
  return matmul(basis.eigenvectors, xt);
}

Tensor filter_by_response(const Tensor& l, const Response& response, const Tensor& x) {
  const SpectralBasis basis = eigendecompose(l);
  Tensor spectrum = gft(basis, x);
  const std::size_t f = spectrum.dim(1);
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const double h = response(basis.eigenvalues[i]);
    for (std::size_t j = 0; j < f; ++j) spectrum(i, j) *= h;
  }
  return igft(basis, spectrum);
}

Tensor poly_filter(const Tensor& l, const Tensor& h, const Tensor& x) {
  require_rank(l, 2, "poly_filter operator");
  require_rank(h, 1, "poly_filter coefficients");
  require_rows(x, l.dim(0), "poly_filter");
  if (h.size() == 0) throw DimensionError("poly_filter: need at least one coefficient");
  const std::size_t k = h.size() - 1;
  Tensor y = scale(x, h[k]);
  for (std::size_t i = k; i-- > 0;) {
    Tensor next = scale(x, h[i]);
    gemm_accumulate(l, false, y, false, next);
    y = std::move(next);
  }
  return y;
}

double cheb_eval(std::size_t k, double x) {
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (std::size_t i = 2; i <= k; ++i) {
    const double next = 2.0 * x * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

Tensor cheb_filter(const Propagation& l_sym, const ChebCoeffs& c, const Tensor& x) {
  if (l_sym.kind != PropagationKind::raw_sym_laplacian) {
    throw ContractError("cheb_filter: operator must be a symmetric normalized Laplacian");
  }
  if (!(c.lambda_max > 0.0)) throw ContractError("cheb_filter: lambda_max must be positive");
  const Tensor& l = l_sym.matrix;
  require_rows(x, l.dim(0), "cheb_filter");
  const double a = 2.0 / c.lambda_max;
  // Lbar * Z = a * L * Z - Z
  auto apply_lbar = [&](const Tensor& z) {
    Tensor out = scale(z, -1.0);
    Tensor lz = matmul(l, z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * lz[i];
    return out;
  };
  Tensor t_prev = x;
  Tensor y = scale(x, c.theta[0]);
  if (c.order() == 0) return y;
  Tensor t_cur = apply_lbar(x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c.theta[1] * t_cur[i];
  for (std::size_t k = 2; k <= c.order(); ++k) {
    Tensor t_next = apply_lbar(t_cur);
    for (std::size_t i = 0; i < t_next.size(); ++i) t_next[i] = 2.0 * t_next[i] - t_prev[i];
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += c.theta[k] * t_next[i];
    t_prev = std::move(t_cur);
    t_cur = std::move(t_next);
  }
  return y;
}

double lambda_max(const Tensor& symmetric) {
  const SpectralBasis b = eigendecompose(symmetric);
  if (b.size() == 0) throw DimensionError("lambda_max: empty matrix");
  return b.eigenvalues[b.size() - 1];
}

Propagation renormalized_propagation(const Adjacency& a) {
  const std::size_t n = a.nodes();
  Tensor tilde = a.matrix();
  for (std::size_t i = 0; i < n; ++i) tilde(i, i) += 1.0;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += tilde(i, j);
    s[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) tilde(i, j) *= s[i] * s[j];
  return {std::move(tilde), PropagationKind::renormalized};
}

Tensor gcn_propagate(const Propagation& p, const Tensor& x, const Tensor& theta, bool activate) {
  require_rank(p.matrix, 2, "gcn_propagate operator");
  require_rows(x, p.matrix.dim(1), "gcn_propagate");
  Tensor y = matmul(p.matrix, matmul(x, theta));
  if (activate)
    for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

ad::Var renormalized_propagation(ad::Var adjacency) {
  const Tensor& av = adjacency.value();
  require_rank(av, 2, "renormalized_propagation");
  const std::size_t n = av.dim(0);
  if (av.dim(1) != n) throw DimensionError("renormalized_propagation: not square, " + to_string(av.shape()));
  auto tilde = std::make_shared<Tensor>(av);
  for (std::size_t i = 0; i < n; ++i) (*tilde)(i, i) += 1.0;
  auto s = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += (*tilde)(i, j);
    if (!(d > 0.0)) throw DegenerateDegreeError("renormalized_propagation: non-positive degree");
    (*s)[i] = 1.0 / std::sqrt(d);
  }
  Tensor p = *tilde;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p(i, j) *= (*s)[i] * (*s)[j];
  const ad::NodeId ia = adjacency.id();
  return adjacency.tape().record(
      ad::OpKind::renormalize, {ia}, std::move(p),
      [ia, n, tilde, s](const ad::Tape&, const Tensor& g, ad::GradSink& sink) {
        const Tensor& at = *tilde;
        const std::vector<double>& sv = *s;
        // P_ij = s_i At_ij s_j with s_i = d_i^{-1/2}, d_i = sum_j At_ij.
        std::vector<double> gs(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g(i, j) * at(i, j);
            gs[i] += gij * sv[j];
            gs[j] += gij * sv[i];
          }
        Tensor& ga = sink.at(ia);
        for (std::size_t i = 0; i < n; ++i) {
          const double gd = -0.5 * sv[i] * sv[i] * sv[i] * gs[i];
          for (std::size_t j = 0; j < n; ++j) ga(i, j) += g(i, j) * sv[i] * sv[j] + gd;
        }
      });
}

ad::Var gcn_propagate(ad::Var p, ad::Var x, ad::Var theta, bool activate) {
  ad::Var y = ad::matmul(p, ad::matmul(x, theta));
  return activate ? ad::relu(y) : y;
}

namespace {
Tensor empty_square(std::size_t n) {
  if (n == 0) throw ContractError("graph needs at least one node");
  return Tensor(Shape{n, n});
}
}  // namespace

Adjacency path_graph(std::size_t n) {
  Tensor m = empty_square(n);
  for (std::size_t i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = 1.0;
  return Adjacency(std::move(m));
}

Adjacency cycle_graph(std::size_t n) {
  if (n < 3) throw ContractError("cycle graph needs at least 3 nodes");
  Tensor m = empty_square(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    m(i, j) = m(j, i) = 1.0;
  }
  return Adjacency(std::move(m));
}

Adjacency complete_graph(std::size_t n) {
  Tensor m = empty_square(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) m(i, j) = 1.0;
  return Adjacency(std::move(m));
}

Adjacency random_er_graph(std::size_t n, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("edge probability must lie in [0, 1]");
  Tensor m = empty_square(n);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) m(i, j) = m(j, i) = 1.0;
  return Adjacency(std::move(m));
}

Adjacency random_connected_graph(std::size_t n, double p, std::mt19937_64& rng) {
  Tensor m = empty_square(n);
  std::uniform_real_distribution<double> weight(0.1, 1.0);
  std::bernoulli_distribution edge(p);
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> parent(0, i - 1);
    const std::size_t j = parent(rng);
    m(i, j) = m(j, i) = weight(rng);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (m(i, j) == 0.0 && edge(rng)) m(i, j) = m(j, i) = weight(rng);
  return Adjacency(std::move(m));
}

}  // namespace msgcf::graph
