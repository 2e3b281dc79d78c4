#include "msgcf/filter_demo.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <regex>

#include "msgcf/error.hpp"

namespace msgcf::harness {

namespace {

const char* const kGraphOptions = "path-<n>, cycle-<n>, complete-<n>, random-er(<n>,<p>)";
const char* const kResponseOptions = "identity, low-pass-<k>, renormalized-<k>, chebyshev(<t0>,<t1>,...)";

std::size_t parse_count(const std::string& text, const std::string& context) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ConfigError("bad integer in '" + context + "'");
  return v;
}

double parse_real(const std::string& text, const std::string& context) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("bad number in '" + context + "'");
  }
  return v;
}

Tensor power_apply(const Tensor& m, std::size_t k, Tensor x) {
  for (std::size_t i = 0; i < k; ++i) x = matmul(m, x);
  return x;
}

}  // namespace

graph::Adjacency parse_graph_spec(const std::string& spec, std::uint64_t seed) {
  static const std::regex simple(R"((path|cycle|complete)-(\d+))");
  static const std::regex er(R"(random-er\(\s*(\d+)\s*,\s*([0-9.eE+-]+)\s*\))");
  std::smatch m;
  if (std::regex_match(spec, m, simple)) {
    const std::size_t n = parse_count(m[2].str(), spec);
    if (m[1] == "path") return graph::path_graph(n);
    if (m[1] == "cycle") return graph::cycle_graph(n);
    return graph::complete_graph(n);
  }
  if (std::regex_match(spec, m, er)) {
    return graph::random_er_graph(parse_count(m[1].str(), spec), parse_real(m[2].str(), spec), seed);
  }
  throw ConfigError("unknown graph spec '" + spec + "'; valid options: " + kGraphOptions);
}

std::vector<FilterDemoRow> filter_demo(const std::string& graph_spec, const std::string& response_name,
                                       std::uint64_t seed) {
  static const std::regex low_pass(R"(low-pass-(\d+))");
  static const std::regex renorm(R"(renormalized-(\d+))");
  static const std::regex cheb(R"(chebyshev\((.*)\))");

  std::smatch m;
  enum class Kind { identity, low_pass, renormalized, chebyshev } kind;
  std::size_t steps = 0;
  std::vector<double> theta;
  if (response_name == "identity") {
    kind = Kind::identity;
  } else if (std::regex_match(response_name, m, low_pass)) {
    kind = Kind::low_pass;
    steps = parse_count(m[1].str(), response_name);
  } else if (std::regex_match(response_name, m, renorm)) {
    kind = Kind::renormalized;
    steps = parse_count(m[1].str(), response_name);
  } else if (std::regex_match(response_name, m, cheb)) {
    kind = Kind::chebyshev;
    const std::string body = m[1].str();
    std::size_t start = 0;
    while (start <= body.size()) {
      const std::size_t comma = std::min(body.find(',', start), body.size());
      std::string item = body.substr(start, comma - start);
      item.erase(0, item.find_first_not_of(' '));
      item.erase(item.find_last_not_of(' ') + 1);
      theta.push_back(parse_real(item, response_name));
      start = comma + 1;
    }
  } else {
    throw ConfigError("unknown response '" + response_name + "'; valid options: " + kResponseOptions);
  }

  const graph::Adjacency a = parse_graph_spec(graph_spec, seed);
  const std::size_t n = a.nodes();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor x(Shape{n, 1});
  for (double& v : x.data()) v = gauss(rng);

  Tensor op;
  graph::Response response;
  Tensor y;
  if (kind == Kind::renormalized) {
    const graph::Propagation p = graph::renormalized_propagation(a);
    op = subtract(Tensor::identity(n), p.matrix);
    response = [steps](double lambda) { return std::pow(1.0 - lambda, static_cast<double>(steps)); };
    y = power_apply(p.matrix, steps, x);
  } else {
    const graph::Propagation l = graph::sym_laplacian(a);
    op = l.matrix;
    if (kind == Kind::identity) {
      response = [](double) { return 1.0; };
      y = x;
    } else if (kind == Kind::low_pass) {
      response = [steps](double lambda) { return std::pow(1.0 - lambda / 2.0, static_cast<double>(steps)); };
      y = power_apply(subtract(Tensor::identity(n), scale(l.matrix, 0.5)), steps, x);
    } else {
      const graph::ChebCoeffs coeffs(Tensor(Shape{theta.size()}, theta), graph::lambda_max(l.matrix));
      response = [coeffs](double lambda) {
        double h = 0.0;
        for (std::size_t k = 0; k <= coeffs.order(); ++k) {
          h += coeffs.theta[k] * graph::cheb_eval(k, 2.0 * lambda / coeffs.lambda_max - 1.0);
        }
        return h;
      };
      y = graph::cheb_filter(l, coeffs, x);
    }
  }

  const graph::SpectralBasis basis = graph::eigendecompose(op);
  const Tensor xt = graph::gft(basis, x);
  const Tensor yt = graph::gft(basis, y);
  std::vector<FilterDemoRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double lambda = basis.eigenvalues[i];
    rows.push_back({i, lambda, xt[i], response(lambda), yt[i]});
  }
  return rows;
}

std::string filter_demo_csv(const std::vector<FilterDemoRow>& rows) {
  std::string out = "eigen_index,eigenvalue,input_coeff,response,output_coeff\n";
  char buf[160];
  for (const FilterDemoRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.eigen_index, r.eigenvalue, r.input_coeff,
                  r.response, r.output_coeff);
    out += buf;
  }
  return out;
}

}  // namespace msgcf::harness
