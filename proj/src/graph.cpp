#include "rau/graph.hpp"

#include <algorithm>
#include <cmath>

#include "rau/kernels.hpp"

namespace rau {

namespace {

constexpr double kLogFloor = 1e-12;

std::string pair_shapes(const Tensor& a, const Tensor& b) {
  return shape_string(a.shape()) + " and " + shape_string(b.shape());
}

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

Shape matrix_shape(std::size_t r, std::size_t c, bool as_vector) {
  return as_vector ? Shape{r} : Shape{r, c};
}

}  // namespace

// --- Graph ------------------------------------------------------------------

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, {}, &p, record_});
  bound_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (auto in : inputs) needs = needs || nodes_[in].needs_grad;
  }
  Node node{std::move(value), {}, {}, {}, nullptr, needs};
  if (needs) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

const Tensor& Graph::grad(std::size_t id) { return grad_slot(id); }

void Graph::backward(Var loss) {
  if (!record_) throw ContractError("backward called on a graph that does not record gradients");
  if (&loss.graph() != this) throw ContractError("backward called with a node from another graph");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_slot(loss.id()).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) add_into(n.param->grad, n.grad);
  }
}

// --- Ops --------------------------------------------------------------------

namespace ad {

Var elementwise(UnaryKind kind, Var x, double scalar) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  const double* xs = in.data();
  double* ys = out.data();
  const std::size_t n = in.size();
  switch (kind) {
    case UnaryKind::Tanh:
      for (std::size_t i = 0; i < n; ++i) ys[i] = std::tanh(xs[i]);
      break;
    case UnaryKind::Exp:
      for (std::size_t i = 0; i < n; ++i) ys[i] = std::exp(xs[i]);
      break;
    case UnaryKind::Log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(xs[i] > 0.0)) {
          throw DomainError("log: non-positive input " + std::to_string(xs[i]) + " at index " +
                            std::to_string(i));
        }
        ys[i] = std::log(xs[i]);
      }
      break;
    case UnaryKind::Negate:
      for (std::size_t i = 0; i < n; ++i) ys[i] = -xs[i];
      break;
    case UnaryKind::AddScalar:
      for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i] + scalar;
      break;
    case UnaryKind::MulScalar:
      for (std::size_t i = 0; i < n; ++i) ys[i] = xs[i] * scalar;
      break;
    case UnaryKind::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) ys[i] = 1.0 / (1.0 + std::exp(-xs[i]));
      break;
  }
  const std::size_t xid = x.id();
  return x.graph().record(std::move(out), {xid}, [kind, xid, scalar](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& y = g.value(self);
    const Tensor& xv = g.value(xid);
    Tensor& gx = g.grad_slot(xid);
    const std::size_t n = gy.size();
    for (std::size_t i = 0; i < n; ++i) {
      switch (kind) {
        case UnaryKind::Tanh: gx[i] += gy[i] * (1.0 - y[i] * y[i]); break;
        case UnaryKind::Exp: gx[i] += gy[i] * y[i]; break;
        case UnaryKind::Log: gx[i] += gy[i] / xv[i]; break;
        case UnaryKind::Negate: gx[i] -= gy[i]; break;
        case UnaryKind::AddScalar: gx[i] += gy[i]; break;
        case UnaryKind::MulScalar: gx[i] += gy[i] * scalar; break;
        case UnaryKind::Sigmoid: gx[i] += gy[i] * y[i] * (1.0 - y[i]); break;
      }
    }
  });
}

Var tanh(Var x) { return elementwise(UnaryKind::Tanh, x); }
Var exp(Var x) { return elementwise(UnaryKind::Exp, x); }
Var log(Var x) { return elementwise(UnaryKind::Log, x); }
Var negate(Var x) { return elementwise(UnaryKind::Negate, x); }
Var sigmoid(Var x) { return elementwise(UnaryKind::Sigmoid, x); }
Var add_scalar(Var x, double c) { return elementwise(UnaryKind::AddScalar, x, c); }
Var mul_scalar(Var x, double c) { return elementwise(UnaryKind::MulScalar, x, c); }

namespace {

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + pair_shapes(a, b));
  }
}

enum class Binary { Add, Sub, Mul };

Var binary(Binary kind, Var a, Var b, const char* name) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_same(av, bv, name);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    switch (kind) {
      case Binary::Add: out[i] = av[i] + bv[i]; break;
      case Binary::Sub: out[i] = av[i] - bv[i]; break;
      case Binary::Mul: out[i] = av[i] * bv[i]; break;
    }
  }
  const std::size_t aid = a.id(), bid = b.id();
  return a.graph().record(std::move(out), {aid, bid}, [kind, aid, bid](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(aid)) {
      Tensor& ga = g.grad_slot(aid);
      if (kind == Binary::Mul) {
        const Tensor& bv = g.value(bid);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
      } else {
        add_into(ga, gy);
      }
    }
    if (g.needs_grad(bid)) {
      Tensor& gb = g.grad_slot(bid);
      if (kind == Binary::Mul) {
        const Tensor& av = g.value(aid);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
      } else if (kind == Binary::Sub) {
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      } else {
        add_into(gb, gy);
      }
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(Binary::Add, a, b, "add"); }
Var sub(Var a, Var b) { return binary(Binary::Sub, a, b, "sub"); }
Var mul(Var a, Var b) { return binary(Binary::Mul, a, b, "mul"); }

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions disagree for " + pair_shapes(av, bv));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(matrix_shape(m, n, bv.rank() == 1));
  kernels::parallel::gemm_nn(av.data(), bv.data(), out.data(), m, k, n, false);
  const std::size_t aid = a.id(), bid = b.id();
  return a.graph().record(std::move(out), {aid, bid}, [aid, bid, m, k, n](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(aid)) {
      kernels::parallel::gemm_nt(gy.data(), g.value(bid).data(), g.grad_slot(aid).data(), m, n, k, true);
    }
    if (g.needs_grad(bid)) {
      kernels::parallel::gemm_tn(g.value(aid).data(), gy.data(), g.grad_slot(bid).data(), m, k, n, true);
    }
  });
}

Var add_column(Var x, Var b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.cols() != 1 || bv.rows() != xv.rows()) {
    throw ShapeError("add_column: cannot broadcast " + shape_string(bv.shape()) + " across " +
                     shape_string(xv.shape()));
  }
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] + bv[i];
  }
  const std::size_t xid = x.id(), bid = b.id();
  return x.graph().record(std::move(out), {xid, bid}, [xid, bid, r, c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    if (g.needs_grad(xid)) add_into(g.grad_slot(xid), gy);
    if (g.needs_grad(bid)) {
      Tensor& gb = g.grad_slot(bid);
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += gy[i * c + j];
        gb[i] += s;
      }
    }
  });
}

Var linear_combine(Var a, Var x, Var b, bool broadcast) {
  Var ax = matmul(a, x);
  if (broadcast) return add_column(ax, b);
  if (ax.rows() != b.rows() || ax.cols() != b.cols()) {
    throw ShapeError("linear_combine: bias shape " + shape_string(b.shape()) + " does not match product " +
                     shape_string(ax.shape()));
  }
  return add(ax, b);
}

Var softmax(Var scores) {
  const Tensor& xv = scores.value();
  if (!xv.all_finite()) throw DomainError("softmax: non-finite score");
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out(xv.shape());
  kernels::parallel::softmax_cols(xv.data(), out.data(), r, c);
  const std::size_t xid = scores.id();
  return scores.graph().record(std::move(out), {xid}, [xid, r, c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_slot(xid);
    for (std::size_t j = 0; j < c; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < r; ++i) dot += gy[i * c + j] * y[i * c + j];
      for (std::size_t i = 0; i < r; ++i) gx[i * c + j] += y[i * c + j] * (gy[i * c + j] - dot);
    }
  });
}

namespace {

Var nll_columns(Var a, std::vector<std::size_t> labels) {
  const Tensor& av = a.value();
  const std::size_t c = av.cols();
  double total = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    total -= std::log(std::max(av[labels[j] * c + j], kLogFloor));
  }
  const std::size_t aid = a.id();
  return a.graph().record(Tensor({1}, total), {aid},
                          [aid, c, labels = std::move(labels)](Graph& g, std::size_t self) {
                            const double gy = g.grad(self)[0];
                            const Tensor& av = g.value(aid);
                            Tensor& ga = g.grad_slot(aid);
                            for (std::size_t j = 0; j < c; ++j) {
                              const std::size_t idx = labels[j] * c + j;
                              // Clamped entries are constant in the loss.
                              if (av[idx] > kLogFloor) ga[idx] -= gy / av[idx];
                            }
                          });
}

}  // namespace

Var cross_entropy(Var a, Var y) {
  const Tensor& av = a.value();
  const Tensor& yv = y.value();
  check_same(av, yv, "cross_entropy");
  const std::size_t r = yv.rows(), c = yv.cols();
  std::vector<std::size_t> labels(c);
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t hot = 0;
    for (std::size_t i = 0; i < r; ++i) {
      const double v = yv[i * c + j];
      if (v == 1.0) {
        labels[j] = i;
        ++hot;
      } else if (v != 0.0) {
        hot = 2;
        break;
      }
    }
    if (hot != 1) throw ContractError("cross_entropy: target column " + std::to_string(j) + " is not one-hot");
  }
  return nll_columns(a, std::move(labels));
}

Var cross_entropy_labels(Var a, std::span<const std::size_t> labels) {
  const Tensor& av = a.value();
  if (labels.size() != av.cols()) {
    throw ShapeError("cross_entropy_labels: " + std::to_string(labels.size()) + " labels for " +
                     shape_string(av.shape()));
  }
  for (auto l : labels) {
    if (l >= av.rows()) throw ContractError("cross_entropy_labels: label " + std::to_string(l) + " out of range");
  }
  return nll_columns(a, std::vector<std::size_t>(labels.begin(), labels.end()));
}

Var sum(Var x) {
  const std::size_t xid = x.id();
  return x.graph().record(Tensor({1}, x.value().sum()), {xid}, [xid](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    Tensor& gx = g.grad_slot(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy;
  });
}

Var repeat_cols(Var x, std::size_t times) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), b = xv.cols();
  const std::size_t width = b * times;
  Tensor out({r, width});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double v = xv[i * b + j];
      double* dst = out.data() + i * width + j * times;
      std::fill(dst, dst + times, v);
    }
  }
  const std::size_t xid = x.id();
  return x.graph().record(std::move(out), {xid}, [xid, r, b, times, width](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_slot(xid);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        const double* src = gy.data() + i * width + j * times;
        double s = 0.0;
        for (std::size_t t = 0; t < times; ++t) s += src[t];
        gx[i * b + j] += s;
      }
    }
  });
}

Var reshape(Var x, Shape shape) {
  const std::size_t xid = x.id();
  return x.graph().record(x.value().reshaped(std::move(shape)), {xid}, [xid](Graph& g, std::size_t self) {
    add_into(g.grad_slot(xid), g.grad(self));
  });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  const std::size_t xid = x.id();
  return x.graph().record(std::move(out), {xid}, [xid, r, c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_slot(xid);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
    }
  });
}

Var block_weighted_sum(Var gmat, Var w, std::size_t l) {
  const Tensor& gv = gmat.value();
  const Tensor& wv = w.value();
  const std::size_t s = gv.rows(), b = wv.cols();
  if (wv.rows() != l || gv.cols() != l * b) {
    throw ShapeError("block_weighted_sum: " + pair_shapes(gv, wv) + " with block width " + std::to_string(l));
  }
  Tensor out(matrix_shape(s, b, wv.rank() == 1));
  kernels::parallel::block_weighted_sum(gv.data(), wv.data(), out.data(), s, l, b);
  const std::size_t gid = gmat.id(), wid = w.id();
  return gmat.graph().record(std::move(out), {gid, wid}, [gid, wid, s, l, b](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    const std::size_t width = l * b;
    if (g.needs_grad(gid)) {
      const Tensor& wv = g.value(wid);
      Tensor& gg = g.grad_slot(gid);
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          const double d = gy[i * b + j];
          double* dst = gg.data() + i * width + j * l;
          for (std::size_t t = 0; t < l; ++t) dst[t] += d * wv[t * b + j];
        }
      }
    }
    if (g.needs_grad(wid)) {
      const Tensor& gv = g.value(gid);
      Tensor& gw = g.grad_slot(wid);
      for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          const double d = gy[i * b + j];
          const double* src = gv.data() + i * width + j * l;
          for (std::size_t t = 0; t < l; ++t) gw[t * b + j] += d * src[t];
        }
      }
    }
  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  const std::size_t v = tv.rows(), d = tv.cols(), n = ids.size();
  if (n == 0) throw ContractError("embedding_lookup: empty id list");
  for (auto id : ids) {
    if (id >= v) {
      throw ContractError("embedding_lookup: token id " + std::to_string(id) + " out of range [0, " +
                          std::to_string(v) + ")");
    }
  }
  Tensor out({d, n});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < d; ++c) out[c * n + j] = tv[ids[j] * d + c];
  }
  const std::size_t tid = table.id();
  return table.graph().record(
      std::move(out), {tid},
      [tid, d, n, rows = std::vector<std::size_t>(ids.begin(), ids.end())](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gt = g.grad_slot(tid);
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t c = 0; c < d; ++c) gt[rows[j] * d + c] += gy[c * n + j];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  bool all_vectors = true;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column count mismatch " + pair_shapes(parts[0].value(), p.value()));
    total += p.rows();
    all_vectors = all_vectors && p.value().rank() == 1;
    ids.push_back(p.id());
  }
  Tensor out(matrix_shape(total, c, all_vectors));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  return parts[0].graph().record(std::move(out), ids, [ids](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      const std::size_t n = g.value(id).size();
      if (g.needs_grad(id)) {
        Tensor& gx = g.grad_slot(id);
        for (std::size_t i = 0; i < n; ++i) gx[i] += gy[offset + i];
      }
      offset += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row count mismatch " + pair_shapes(parts[0].value(), p.value()));
    total += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tensor out({r, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t w = pv.cols();
    for (std::size_t i = 0; i < r; ++i) {
      std::copy(pv.data() + i * w, pv.data() + (i + 1) * w, out.data() + i * total + offset);
    }
    offset += w;
  }
  return parts[0].graph().record(std::move(out), ids, [ids, widths, r, total](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const std::size_t w = widths[p];
      if (g.needs_grad(ids[p])) {
        Tensor& gx = g.grad_slot(ids[p]);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < w; ++j) gx[i * w + j] += gy[i * total + offset + j];
        }
      }
      offset += w;
    }
  });
}

Var select_cols(Var x, std::span<const std::size_t> cols) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols(), n = cols.size();
  for (auto j : cols) {
    if (j >= c) throw ShapeError("select_cols: column " + std::to_string(j) + " out of range for " + shape_string(xv.shape()));
  }
  Tensor out({r, n});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * c + cols[j]];
  }
  const std::size_t xid = x.id();
  return x.graph().record(
      std::move(out), {xid},
      [xid, r, c, n, picked = std::vector<std::size_t>(cols.begin(), cols.end())](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        Tensor& gx = g.grad_slot(xid);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < n; ++j) gx[i * c + picked[j]] += gy[i * n + j];
        }
      });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (begin + count > r || count == 0) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(xv.shape()));
  }
  Tensor out(matrix_shape(count, c, xv.rank() == 1));
  std::copy(xv.data() + begin * c, xv.data() + (begin + count) * c, out.data());
  const std::size_t xid = x.id();
  return x.graph().record(std::move(out), {xid}, [xid, begin, c](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_slot(xid);
    double* dst = gx.data() + begin * c;
    for (std::size_t i = 0; i < gy.size(); ++i) dst[i] += gy[i];
  });
}

Var lstm_pointwise(Var pre, Var c) {
  const Tensor& pv = pre.value();
  const Tensor& cv = c.value();
  const std::size_t h = cv.rows(), b = cv.cols();
  if (pv.rows() != 4 * h || pv.cols() != b) {
    throw ShapeError("lstm_pointwise: gates " + shape_string(pv.shape()) + " do not fit cell " +
                     shape_string(cv.shape()));
  }
  const std::size_t n = h * b;
  // gates holds s(i), s(f), s(o), tanh(g) and then tanh(c') in five blocks.
  Tensor gates({5 * h, b});
  Tensor out(matrix_shape(2 * h, b, cv.rank() == 1));
  for (std::size_t e = 0; e < n; ++e) {
    const double in = 1.0 / (1.0 + std::exp(-pv[e]));
    const double forget = 1.0 / (1.0 + std::exp(-pv[n + e]));
    const double output = 1.0 / (1.0 + std::exp(-pv[2 * n + e]));
    const double cand = std::tanh(pv[3 * n + e]);
    const double cell = forget * cv[e] + in * cand;
    const double tc = std::tanh(cell);
    gates[e] = in;
    gates[n + e] = forget;
    gates[2 * n + e] = output;
    gates[3 * n + e] = cand;
    gates[4 * n + e] = tc;
    out[e] = output * tc;
    out[n + e] = cell;
  }
  const std::size_t pid = pre.id(), cid = c.id();
  return pre.graph().record(
      std::move(out), {pid, cid}, [pid, cid, n, gates = std::move(gates)](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad(self);
        const Tensor& cv = g.value(cid);
        Tensor* gp = g.needs_grad(pid) ? &g.grad_slot(pid) : nullptr;
        Tensor* gc = g.needs_grad(cid) ? &g.grad_slot(cid) : nullptr;
        for (std::size_t e = 0; e < n; ++e) {
          const double in = gates[e], forget = gates[n + e], output = gates[2 * n + e];
          const double cand = gates[3 * n + e], tc = gates[4 * n + e];
          const double gh = gy[e];
          const double gcell = gy[n + e] + gh * output * (1.0 - tc * tc);
          if (gp) {
            Tensor& p = *gp;
            p[e] += gcell * cand * in * (1.0 - in);
            p[n + e] += gcell * cv[e] * forget * (1.0 - forget);
            p[2 * n + e] += gh * tc * output * (1.0 - output);
            p[3 * n + e] += gcell * in * (1.0 - cand * cand);
          }
          if (gc) (*gc)[e] += gcell * forget;
        }
      });
}

}  // namespace ad

}  // namespace rau
