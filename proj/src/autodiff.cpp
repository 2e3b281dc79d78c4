#include "msgcf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace msgcf::ad {

using msgcf::to_string;

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::softplus: return "softplus";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::hadamard: return "hadamard";
    case OpKind::conv2d: return "conv2d";
    case OpKind::maxpool2: return "maxpool2";
    case OpKind::linear: return "linear";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
    case OpKind::add: return "add";
    case OpKind::scale: return "scale";
    case OpKind::sum: return "sum";
    case OpKind::reshape: return "reshape";
    case OpKind::select_rows: return "select_rows";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::channel_mean: return "channel_mean";
    case OpKind::pairwise_abs_diff: return "pairwise_abs_diff";
    case OpKind::zero_diagonal: return "zero_diagonal";
    case OpKind::renormalize: return "renormalize";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

bool GradSink::wants(NodeId id) const { return tape_.node(id).requires_grad; }

Tensor& GradSink::at(NodeId id) {
  auto& slot = grads_[id];
  if (!slot) slot.emplace(tape_.value(id).shape());
  return *slot;
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::constant, {}, std::move(value), false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{OpKind::parameter, {}, std::move(value), true, {}});
  parameters_.push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
  bool needs = false;
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) throw ContractError("tape: input node recorded after its consumer");
    needs = needs || nodes_[id].requires_grad;
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), needs, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

GradientMap backward(const Tape& tape, Var root) {
  if (&root.tape() != &tape) throw ContractError("backward: root belongs to a different tape");
  if (root.value().size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + to_string(root.value().shape()));
  }
  std::vector<std::optional<Tensor>> grads(root.id() + 1);
  GradSink sink(tape, grads);
  if (tape.node(root.id()).requires_grad) {
    sink.at(root.id())[0] = 1.0;
    for (NodeId i = root.id() + 1; i-- > 0;) {
      const Node& n = tape.node(i);
      if (!grads[i] || !n.backward) continue;
      n.backward(tape, *grads[i], sink);
      // Interior buffers are no longer needed once propagated.
      if (n.kind != OpKind::parameter) grads[i].reset();
    }
  }
  GradientMap out;
  for (NodeId p : tape.parameters()) {
    if (p < grads.size() && grads[p]) {
      out.emplace(p, std::move(*grads[p]));
    } else {
      out.emplace(p, Tensor(tape.value(p).shape()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ops

namespace {

Tape& same_tape(Var a, Var b, const char* what) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(what) + ": operands on different tapes");
  return a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "matmul");
  Tensor out = msgcf::matmul(a.value(), b.value());
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib](const Tape& t, const Tensor& g, GradSink& s) {
    if (s.wants(ia)) gemm_accumulate(g, false, t.value(ib), true, s.at(ia));
    if (s.wants(ib)) gemm_accumulate(t.value(ia), true, g, false, s.at(ib));
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const NodeId ix = x.id();
  return x.tape().record(OpKind::relu, {ix}, std::move(out), [ix](const Tape& t, const Tensor& g, GradSink& s) {
    const Tensor& xv = t.value(ix);
    Tensor& gx = s.at(ix);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var softplus(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = softplus_value(v);
  const NodeId ix = x.id();
  return x.tape().record(OpKind::softplus, {ix}, std::move(out), [ix](const Tape& t, const Tensor& g, GradSink& s) {
    const Tensor& xv = t.value(ix);
    Tensor& gx = s.at(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid_value(xv[i]);
  });
}

Var concat_cols(Var a, Var b) {
  Tape& tape = same_tape(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "concat_cols lhs");
  require_rank(bv, 2, "concat_cols rhs");
  if (av.dim(0) != bv.dim(0)) {
    throw DimensionError("concat_cols: row counts differ, " + to_string(av.shape()) + " and " + to_string(bv.shape()));
  }
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor out(Shape{n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.raw() + i * p, p, out.raw() + i * (p + q));
    std::copy_n(bv.raw() + i * q, q, out.raw() + i * (p + q) + p);
  }
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::concat_cols, {ia, ib}, std::move(out),
                     [ia, ib, n, p, q](const Tape&, const Tensor& g, GradSink& s) {
                       if (s.wants(ia)) {
                         Tensor& ga = s.at(ia);
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
                       }
                       if (s.wants(ib)) {
                         Tensor& gb = s.at(ib);
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
                       }
                     });
}

Var hadamard(Var a, Var b) {
  Tape& tape = same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::hadamard, {ia, ib}, std::move(out), [ia, ib](const Tape& t, const Tensor& g, GradSink& s) {
    if (s.wants(ia)) {
      const Tensor& bv = t.value(ib);
      Tensor& ga = s.at(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (s.wants(ib)) {
      const Tensor& av = t.value(ia);
      Tensor& gb = s.at(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

namespace {

struct ConvDims {
  std::size_t c_in, h, w, c_out, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  require_rank(bias, 1, "conv2d bias");
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(2), kernels.dim(3), 0, 0};
  if (kernels.dim(1) != d.c_in || bias.dim(0) != d.c_out) {
    throw DimensionError("conv2d: kernels " + to_string(kernels.shape()) + " and bias " + to_string(bias.shape()) +
                         " incompatible with input " + to_string(input.shape()));
  }
  if (d.kh > d.h || d.kw > d.w || d.kh == 0 || d.kw == 0) {
    throw DimensionError("conv2d: kernel " + to_string(kernels.shape()) + " larger than input " +
                         to_string(input.shape()));
  }
  d.oh = d.h - d.kh + 1;
  d.ow = d.w - d.kw + 1;
  return d;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  const ConvDims d = conv_dims(input, kernels, bias);
  Tensor out(Shape{d.c_out, d.oh, d.ow});
  const double* in = input.raw();
  const double* k = kernels.raw();
  for (std::size_t o = 0; o < d.c_out; ++o) {
    double* plane = out.raw() + o * d.oh * d.ow;
    std::fill_n(plane, d.oh * d.ow, bias[o]);
    for (std::size_t c = 0; c < d.c_in; ++c) {
      const double* src = in + c * d.h * d.w;
      for (std::size_t i = 0; i < d.kh; ++i) {
        for (std::size_t j = 0; j < d.kw; ++j) {
          const double wv = k[((o * d.c_in + c) * d.kh + i) * d.kw + j];
          for (std::size_t y = 0; y < d.oh; ++y) {
            const double* srow = src + (y + i) * d.w + j;
            double* orow = plane + y * d.ow;
            for (std::size_t x = 0; x < d.ow; ++x) orow[x] += wv * srow[x];
          }
        }
      }
    }
  }
  return out;
}

Var conv2d(Var input, Var kernels, Var bias) {
  Tape& tape = same_tape(input, kernels, "conv2d");
  same_tape(input, bias, "conv2d");
  Tensor out = conv2d_forward(input.value(), kernels.value(), bias.value());
  const ConvDims d = conv_dims(input.value(), kernels.value(), bias.value());
  const NodeId ii = input.id(), ik = kernels.id(), ib = bias.id();
  return tape.record(
      OpKind::conv2d, {ii, ik, ib}, std::move(out), [ii, ik, ib, d](const Tape& t, const Tensor& g, GradSink& s) {
        const Tensor& in = t.value(ii);
        const Tensor& k = t.value(ik);
        const bool want_in = s.wants(ii), want_k = s.wants(ik);
        double* gin = want_in ? s.at(ii).raw() : nullptr;
        double* gk = want_k ? s.at(ik).raw() : nullptr;
        if (s.wants(ib)) {
          Tensor& gb = s.at(ib);
          for (std::size_t o = 0; o < d.c_out; ++o) {
            double acc = 0.0;
            const double* plane = g.raw() + o * d.oh * d.ow;
            for (std::size_t p = 0; p < d.oh * d.ow; ++p) acc += plane[p];
            gb[o] += acc;
          }
        }
        if (!want_in && !want_k) return;
        for (std::size_t o = 0; o < d.c_out; ++o) {
          const double* gplane = g.raw() + o * d.oh * d.ow;
          for (std::size_t c = 0; c < d.c_in; ++c) {
            const double* src = in.raw() + c * d.h * d.w;
            double* gsrc = want_in ? gin + c * d.h * d.w : nullptr;
            for (std::size_t i = 0; i < d.kh; ++i) {
              for (std::size_t j = 0; j < d.kw; ++j) {
                const std::size_t kidx = ((o * d.c_in + c) * d.kh + i) * d.kw + j;
                const double wv = k[kidx];
                double acc = 0.0;
                for (std::size_t y = 0; y < d.oh; ++y) {
                  const double* grow = gplane + y * d.ow;
                  const double* srow = src + (y + i) * d.w + j;
                  if (want_k)
                    for (std::size_t x = 0; x < d.ow; ++x) acc += grow[x] * srow[x];
                  if (want_in) {
                    double* gsrow = gsrc + (y + i) * d.w + j;
                    for (std::size_t x = 0; x < d.ow; ++x) gsrow[x] += wv * grow[x];
                  }
                }
                if (want_k) gk[kidx] += acc;
              }
            }
          }
        }
      });
}

Var maxpool2(Var input) {
  const Tensor& in = input.value();
  require_rank(in, 3, "maxpool2 input");
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  if (h < 2 || w < 2) throw DimensionError("maxpool2: spatial extent below 2 in " + to_string(in.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out(Shape{c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = (ch * h + 2 * y) * w + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t q = 1; q < 4; ++q)
          if (in[cand[q]] > in[best]) best = cand[q];
        const std::size_t o = (ch * oh + y) * ow + x;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  const NodeId ii = input.id();
  return input.tape().record(OpKind::maxpool2, {ii}, std::move(out),
                             [ii, argmax](const Tape&, const Tensor& g, GradSink& s) {
                               Tensor& gi = s.at(ii);
                               for (std::size_t o = 0; o < g.size(); ++o) gi[(*argmax)[o]] += g[o];
                             });
}

Var linear(Var x, Var weight, Var bias) {
  Tape& tape = same_tape(x, weight, "linear");
  same_tape(x, bias, "linear");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "linear input");
  require_rank(wv, 2, "linear weight");
  require_rank(bv, 1, "linear bias");
  if (xv.dim(1) != wv.dim(0) || bv.dim(0) != wv.dim(1)) {
    throw DimensionError("linear: input " + to_string(xv.shape()) + ", weight " + to_string(wv.shape()) + ", bias " +
                         to_string(bv.shape()));
  }
  const std::size_t n = xv.dim(0), q = wv.dim(1);
  Tensor out(Shape{n, q});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(bv.raw(), q, out.raw() + i * q);
  gemm_accumulate(xv, false, wv, false, out);
  const NodeId ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape.record(OpKind::linear, {ix, iw, ib}, std::move(out),
                     [ix, iw, ib, n, q](const Tape& t, const Tensor& g, GradSink& s) {
                       if (s.wants(ix)) gemm_accumulate(g, false, t.value(iw), true, s.at(ix));
                       if (s.wants(iw)) gemm_accumulate(t.value(ix), true, g, false, s.at(iw));
                       if (s.wants(ib)) {
                         Tensor& gb = s.at(ib);
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < q; ++j) gb[j] += g[i * q + j];
                       }
                     });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.raw() + i * m;
    double* o = out.raw() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < m; ++j) o[j] /= z;
  }
  return out;
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& lv = logits.value();
  require_rank(lv, 2, "softmax_cross_entropy logits");
  const std::size_t n = lv.dim(0), m = lv.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  if (n == 0 || m == 0) throw DimensionError("softmax_cross_entropy: empty logits");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= m) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(m) + ")");
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.raw() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    loss += std::log(z) + mx - row[labels[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const NodeId il = logits.id();
  return logits.tape().record(OpKind::softmax_cross_entropy, {il}, Tensor::scalar(loss),
                              [il, lab = std::move(lab), n, m](const Tape& t, const Tensor& g, GradSink& s) {
                                const Tensor p = softmax_rows(t.value(il));
                                Tensor& gl = s.at(il);
                                const double up = g[0] / static_cast<double>(n);
                                for (std::size_t i = 0; i < n; ++i) {
                                  for (std::size_t j = 0; j < m; ++j) {
                                    const double onehot = j == lab[i] ? 1.0 : 0.0;
                                    gl[i * m + j] += up * (p[i * m + j] - onehot);
                                  }
                                }
                              });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b, "add");
  Tensor out = msgcf::add(a.value(), b.value());
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::add, {ia, ib}, std::move(out), [ia, ib](const Tape&, const Tensor& g, GradSink& s) {
    for (NodeId id : {ia, ib}) {
      if (!s.wants(id)) continue;
      Tensor& gi = s.at(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var scale(Var a, double alpha) {
  const NodeId ia = a.id();
  return a.tape().record(OpKind::scale, {ia}, msgcf::scale(a.value(), alpha),
                         [ia, alpha](const Tape&, const Tensor& g, GradSink& s) {
                           Tensor& ga = s.at(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i];
                         });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const NodeId ia = a.id();
  return a.tape().record(OpKind::sum, {ia}, Tensor::scalar(total), [ia](const Tape&, const Tensor& g, GradSink& s) {
    for (double& v : s.at(ia).data()) v += g[0];
  });
}

Var reshape(Var a, Shape shape) {
  const NodeId ia = a.id();
  return a.tape().record(OpKind::reshape, {ia}, a.value().reshaped(std::move(shape)),
                         [ia](const Tape&, const Tensor& g, GradSink& s) {
                           Tensor& ga = s.at(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

Var select_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_rank(av, 2, "select_rows");
  if (begin > end || end > av.dim(0)) {
    throw DimensionError("select_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + to_string(av.shape()));
  }
  const std::size_t f = av.dim(1);
  Tensor out(Shape{end - begin, f}, std::vector<double>(av.raw() + begin * f, av.raw() + end * f));
  const NodeId ia = a.id();
  return a.tape().record(OpKind::select_rows, {ia}, std::move(out),
                         [ia, begin, f](const Tape&, const Tensor& g, GradSink& s) {
                           Tensor& ga = s.at(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[begin * f + i] += g[i];
                         });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  require_rank(av, 2, "gather_rows");
  const std::size_t f = av.dim(1);
  Tensor out(Shape{rows.size(), f});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= av.dim(0)) throw IndexError("gather_rows: row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(av.raw() + rows[r] * f, f, out.raw() + r * f);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const NodeId ia = a.id();
  return a.tape().record(OpKind::gather_rows, {ia}, std::move(out),
                         [ia, idx = std::move(idx), f](const Tape&, const Tensor& g, GradSink& s) {
                           Tensor& ga = s.at(ia);
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t j = 0; j < f; ++j) ga[idx[r] * f + j] += g[r * f + j];
                         });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  Tape& tape = rows[0].tape();
  const std::size_t f = rows[0].value().size();
  Tensor out(Shape{rows.size(), f});
  std::vector<NodeId> ids;
  ids.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    same_tape(rows[0], rows[r], "stack_rows");
    if (rows[r].value().size() != f) {
      throw DimensionError("stack_rows: row " + std::to_string(r) + " has shape " + to_string(rows[r].shape()));
    }
    std::copy_n(rows[r].value().raw(), f, out.raw() + r * f);
    ids.push_back(rows[r].id());
  }
  std::vector<NodeId> inputs = ids;
  return tape.record(OpKind::stack_rows, std::move(inputs), std::move(out),
                     [ids = std::move(ids), f](const Tape&, const Tensor& g, GradSink& s) {
                       for (std::size_t r = 0; r < ids.size(); ++r) {
                         if (!s.wants(ids[r])) continue;
                         Tensor& gr = s.at(ids[r]);
                         for (std::size_t j = 0; j < f; ++j) gr[j] += g[r * f + j];
                       }
                     });
}

Var channel_mean(Var a) {
  const Tensor& av = a.value();
  require_rank(av, 3, "channel_mean");
  const std::size_t c = av.dim(0), area = av.dim(1) * av.dim(2);
  if (area == 0) throw DimensionError("channel_mean: empty spatial extent");
  Tensor out(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t p = 0; p < area; ++p) acc += av[ch * area + p];
    out[ch] = acc / static_cast<double>(area);
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::channel_mean, {ia}, std::move(out),
                         [ia, c, area](const Tape&, const Tensor& g, GradSink& s) {
                           Tensor& ga = s.at(ia);
                           const double inv = 1.0 / static_cast<double>(area);
                           for (std::size_t ch = 0; ch < c; ++ch)
                             for (std::size_t p = 0; p < area; ++p) ga[ch * area + p] += g[ch] * inv;
                         });
}

}  // namespace msgcf::ad
