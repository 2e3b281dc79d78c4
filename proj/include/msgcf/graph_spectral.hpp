#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

#include "msgcf/autodiff.hpp"
#include "msgcf/tensor.hpp"

namespace msgcf::graph {

/// Symmetric, nonnegative, zero-diagonal weight matrix. Validated on
/// construction; symmetry is checked exactly as stored.
class Adjacency {
 public:
  explicit Adjacency(Tensor matrix);

  const Tensor& matrix() const noexcept { return matrix_; }
  std::size_t nodes() const noexcept { return matrix_.dim(0); }

 private:
  Tensor matrix_;
};

/// Columns of `eigenvectors` are orthonormal; `eigenvalues` ascending.
struct SpectralBasis {
  Tensor eigenvectors;
  Tensor eigenvalues;

  std::size_t size() const { return eigenvalues.size(); }
};

struct ChebCoeffs {
  Tensor theta;  // length order + 1
  double lambda_max = 2.0;

  ChebCoeffs(Tensor theta, double lambda_max);
  std::size_t order() const { return theta.size() - 1; }
};

enum class PropagationKind { raw_sym_laplacian, renormalized };

struct Propagation {
  Tensor matrix;
  PropagationKind kind;
};

Tensor degree(const Adjacency& a);

/// L = D - A.
Tensor laplacian(const Adjacency& a);

/// I - D^{-1/2} A D^{-1/2}. Throws DegenerateDegreeError for isolated nodes.
Propagation sym_laplacian(const Adjacency& a);

inline constexpr std::size_t kDefaultEigenCap = 256;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps until the off-diagonal Frobenius norm falls to 1e-12 of the
/// input norm, or 100 sweeps have run. Eigenvalues are returned ascending
/// with matching eigenvector columns.
SpectralBasis eigendecompose(const Tensor& m, std::size_t max_nodes = kDefaultEigenCap);

/// Spectral coefficients U^T X.
Tensor gft(const SpectralBasis& basis, const Tensor& x);
/// Node-domain signal U X~.
Tensor igft(const SpectralBasis& basis, const Tensor& xt);

using Response = std::function<double(double)>;

/// U diag(h(lambda)) U^T X by explicit eigendecomposition. This is the
/// reference path the polynomial filters are checked against.
Tensor filter_by_response(const Tensor& l, const Response& response, const Tensor& x);

/// sum_k h_k L^k X, evaluated Horner-style without forming powers of L.
Tensor poly_filter(const Tensor& l, const Tensor& h, const Tensor& x);

/// Chebyshev polynomial of the first kind, T_k(x), by the three-term recursion.
double cheb_eval(std::size_t k, double x);

/// sum_k theta_k T_k(Lbar) X with Lbar = 2 L_sym / lambda_max - I.
Tensor cheb_filter(const Propagation& l_sym, const ChebCoeffs& c, const Tensor& x);

/// Largest eigenvalue, computed exactly from the eigendecomposition.
double lambda_max(const Tensor& symmetric);

/// D~^{-1/2} (A + I) D~^{-1/2}.
Propagation renormalized_propagation(const Adjacency& a);

/// sigma(P X Theta), evaluated as P (X Theta).
Tensor gcn_propagate(const Propagation& p, const Tensor& x, const Tensor& theta, bool activate);

// Differentiable counterparts used by the model. The adjacency input is
// trusted to be symmetric and nonnegative (it comes from the edge scorer).
ad::Var renormalized_propagation(ad::Var adjacency);
ad::Var gcn_propagate(ad::Var p, ad::Var x, ad::Var theta, bool activate);

// Graph builders (unit weights unless noted).
Adjacency path_graph(std::size_t n);
Adjacency cycle_graph(std::size_t n);
Adjacency complete_graph(std::size_t n);
/// Erdos-Renyi G(n, p); may contain isolated nodes.
Adjacency random_er_graph(std::size_t n, double p, std::uint64_t seed);
/// Random spanning tree plus extra edges with probability p, weights in (0.1, 1].
Adjacency random_connected_graph(std::size_t n, double p, std::mt19937_64& rng);

}  // namespace msgcf::graph
