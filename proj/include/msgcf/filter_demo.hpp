#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "msgcf/graph_spectral.hpp"

namespace msgcf::harness {

/// Parses `path-n`, `cycle-n`, `complete-n` or `random-er(n,p)`; the seed
/// only matters for the random graph.
graph::Adjacency parse_graph_spec(const std::string& spec, std::uint64_t seed);

struct FilterDemoRow {
  std::size_t eigen_index = 0;
  double eigenvalue = 0.0;
  double input_coeff = 0.0;
  double response = 0.0;
  double output_coeff = 0.0;
};

/// Filters a seeded Gaussian node signal and reports it per graph frequency.
///
/// Responses:
///   identity          h = 1
///   low-pass-k        h = (1 - lambda/2)^k on L_sym
///   renormalized-k    h = (1 - lambda)^k on I - P, i.e. k applications of P
///   chebyshev(t0,...) h = sum t_i T_i(2 lambda / lambda_max - 1) on L_sym
///
/// Output coefficients come from applying the filter in the node domain and
/// transforming the result, so they agree with `response * input_coeff`
/// only when the filter is implemented correctly.
std::vector<FilterDemoRow> filter_demo(const std::string& graph_spec, const std::string& response_name,
                                       std::uint64_t seed);

std::string filter_demo_csv(const std::vector<FilterDemoRow>& rows);

}  // namespace msgcf::harness
