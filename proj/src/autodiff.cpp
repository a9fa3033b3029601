#include "sacloc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sacloc/error.hpp"

namespace sacloc::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(ErrorCode::kShapeMismatch,
              std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void check_index(const char* op, std::span<const std::uint32_t> index, std::size_t bound) {
  for (auto i : index) {
    if (i >= bound) {
      throw Error(ErrorCode::kShapeMismatch, std::string(op) + ": index " + std::to_string(i) +
                                                 " out of range for " + std::to_string(bound) + " rows");
    }
  }
}

}  // namespace

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Tensor t;
  t.rows = rows.size();
  t.cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != t.cols) throw Error(ErrorCode::kShapeMismatch, "ragged rows in Tensor::from_rows");
    t.data.insert(t.data.end(), r.begin(), r.end());
  }
  return t;
}

Tensor Tensor::row_vector(std::span<const double> values) {
  Tensor t(1, values.size());
  std::copy(values.begin(), values.end(), t.data.begin());
  return t;
}

double Tensor::item() const {
  if (rows != 1 || cols != 1) throw Error(ErrorCode::kNonScalarLoss, "item() on " + shape_string());
  return data[0];
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(const Tensor& value, Tensor* grad_sink) {
  Var v = record(value, true, nullptr);
  nodes_[v.id].sink = grad_sink;
  return v;
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.rows, n.value.cols, 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error(ErrorCode::kInvalidArgument, "loss was recorded on another tape");
  const Tensor& lv = value(loss);
  if (lv.rows != 1 || lv.cols != 1) {
    throw Error(ErrorCode::kNonScalarLoss, "loss has shape " + lv.shape_string());
  }
  for (Node& n : nodes_) {
    if (n.sink != nullptr && n.sink->empty()) *n.sink = Tensor(n.value.rows, n.value.cols, 0.0);
  }
  if (!requires_grad(loss)) return;
  grad_buffer(loss).data[0] += 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink != nullptr) {
      if (!n.sink->same_shape(n.value)) shape_error("gradient sink", *n.sink, n.value);
      add_into(*n.sink, n.grad);
    }
  }
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows, k = a.cols, p = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data.data() + i * p;
    const double* ai = a.data.data() + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double s = ai[kk];
      if (s == 0.0) continue;
      const double* bk = b.data.data() + kk * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += s * bk[j];
    }
  }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows, p = a.cols, k = b.rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data.data() + i * p;
    double* o = out.data.data() + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* bk = b.data.data() + kk * p;
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) s += ai[j] * bk[j];
      o[kk] += s;
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows, k = a.cols, p = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data.data() + i * k;
    const double* bi = b.data.data() + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double s = ai[kk];
      if (s == 0.0) continue;
      double* o = out.data.data() + kk * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += s * bi[j];
    }
  }
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols != bv.rows) shape_error("matmul", av, bv);
  Tensor out(av.rows, bv.cols, 0.0);
  gemm_nn(av, bv, out);
  Tape& t = *a.tape;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Tensor& g) {
                    if (t.requires_grad(a)) gemm_nt(g, t.value(b), t.grad_buffer(a));
                    if (t.requires_grad(b)) gemm_tn(t.value(a), g, t.grad_buffer(b));
                  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && !(bv.rows == 1 && bv.cols == av.cols)) shape_error("add", av, bv);
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    auto brow = bv.row(broadcast ? 0 : r);
    for (std::size_t c = 0; c < out.cols; ++c) row[c] += brow[c];
  }
  Tape& t = *a.tape;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b, broadcast](Tape& t, const Tensor& g) {
                    if (t.requires_grad(a)) add_into(t.grad_buffer(a), g);
                    if (!t.requires_grad(b)) return;
                    Tensor& gb = t.grad_buffer(b);
                    if (!broadcast) {
                      add_into(gb, g);
                      return;
                    }
                    for (std::size_t r = 0; r < g.rows; ++r) {
                      auto grow = g.row(r);
                      for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += grow[c];
                    }
                  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  Tape& t = *a.tape;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Tensor& g) {
                    if (t.requires_grad(a)) add_into(t.grad_buffer(a), g);
                    if (t.requires_grad(b)) {
                      Tensor& gb = t.grad_buffer(b);
                      for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
                    }
                  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  Tape& t = *a.tape;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Tensor& g) {
                    if (t.requires_grad(a)) {
                      Tensor& ga = t.grad_buffer(a);
                      const Tensor& bv = t.value(b);
                      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
                    }
                    if (t.requires_grad(b)) {
                      Tensor& gb = t.grad_buffer(b);
                      const Tensor& av = t.value(a);
                      for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
                    }
                  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  Tape& t = *a.tape;
  return t.record(std::move(out), t.requires_grad(a), [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    const Tensor& av = t.value(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (av.data[i] > 0.0) ga.data[i] += g.data[i];
    }
  });
}

Var row_softmax(Var a) {
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v - mx));
    for (double& v : row) v /= z;
  }
  Tape& t = *a.tape;
  Var self{&t, t.size()};
  return t.record(std::move(out), t.requires_grad(a), [a, self](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    const Tensor& y = t.value(self);
    for (std::size_t r = 0; r < y.rows; ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols; ++c) dot += gr[c] * yr[c];
      auto out = ga.row(r);
      for (std::size_t c = 0; c < y.cols; ++c) out[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  Tape& t = *a.tape;
  return t.record(std::move(out), t.requires_grad(a), [a, s](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorCode::kShapeMismatch, "concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool needs_grad = false;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
    needs_grad = needs_grad || t.requires_grad(p);
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), needs_grad, [inputs](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_buffer(p);
        for (std::size_t i = 0; i < n; ++i) gp.data[i] += g.data[offset + i];
      }
      offset += n;
    }
  });
}

Var select_rows(Var a, std::span<const std::uint32_t> index) {
  const Tensor& av = a.value();
  check_index("select_rows", index, av.rows);
  Tensor out(index.size(), av.cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(av.data.begin() + static_cast<std::ptrdiff_t>(index[r] * av.cols), av.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * av.cols));
  }
  Tape& t = *a.tape;
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return t.record(std::move(out), t.requires_grad(a), [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto dst = ga.row(idx[r]);
      auto src = g.row(r);
      for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
    }
  });
}

Var scatter_add_rows(Var a, std::span<const std::uint32_t> index, std::size_t rows) {
  const Tensor& av = a.value();
  if (index.size() != av.rows) {
    throw Error(ErrorCode::kShapeMismatch, "scatter_add_rows: " + std::to_string(index.size()) +
                                               " indices for " + av.shape_string());
  }
  check_index("scatter_add_rows", index, rows);
  Tensor out(rows, av.cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    auto dst = out.row(index[r]);
    auto src = av.row(r);
    for (std::size_t c = 0; c < av.cols; ++c) dst[c] += src[c];
  }
  Tape& t = *a.tape;
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return t.record(std::move(out), t.requires_grad(a), [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto dst = ga.row(r);
      auto src = g.row(idx[r]);
      for (std::size_t c = 0; c < g.cols; ++c) dst[c] += src[c];
    }
  });
}

Var row_dot(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("row_dot", av, bv);
  Tensor out(av.rows, 1);
  for (std::size_t r = 0; r < av.rows; ++r) {
    auto ar = av.row(r);
    auto br = bv.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < av.cols; ++c) s += ar[c] * br[c];
    out.data[r] = s;
  }
  Tape& t = *a.tape;
  return t.record(std::move(out), t.requires_grad(a) || t.requires_grad(b),
                  [a, b](Tape& t, const Tensor& g) {
                    const Tensor& av = t.value(a);
                    const Tensor& bv = t.value(b);
                    if (t.requires_grad(a)) {
                      Tensor& ga = t.grad_buffer(a);
                      for (std::size_t r = 0; r < av.rows; ++r) {
                        auto dst = ga.row(r);
                        auto br = bv.row(r);
                        for (std::size_t c = 0; c < av.cols; ++c) dst[c] += g.data[r] * br[c];
                      }
                    }
                    if (t.requires_grad(b)) {
                      Tensor& gb = t.grad_buffer(b);
                      for (std::size_t r = 0; r < av.rows; ++r) {
                        auto dst = gb.row(r);
                        auto ar = av.row(r);
                        for (std::size_t c = 0; c < av.cols; ++c) dst[c] += g.data[r] * ar[c];
                      }
                    }
                  });
}

Var scale_rows(Var coeff, Var x) {
  const Tensor& cv = coeff.value();
  const Tensor& xv = x.value();
  if (cv.cols != 1 || cv.rows != xv.rows) shape_error("scale_rows", cv, xv);
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (double& v : out.row(r)) v *= cv.data[r];
  }
  Tape& t = *coeff.tape;
  return t.record(std::move(out), t.requires_grad(coeff) || t.requires_grad(x),
                  [coeff, x](Tape& t, const Tensor& g) {
                    const Tensor& cv = t.value(coeff);
                    const Tensor& xv = t.value(x);
                    if (t.requires_grad(coeff)) {
                      Tensor& gc = t.grad_buffer(coeff);
                      for (std::size_t r = 0; r < xv.rows; ++r) {
                        auto xr = xv.row(r);
                        auto gr = g.row(r);
                        double s = 0.0;
                        for (std::size_t c = 0; c < xv.cols; ++c) s += gr[c] * xr[c];
                        gc.data[r] += s;
                      }
                    }
                    if (t.requires_grad(x)) {
                      Tensor& gx = t.grad_buffer(x);
                      for (std::size_t r = 0; r < xv.rows; ++r) {
                        auto dst = gx.row(r);
                        auto gr = g.row(r);
                        for (std::size_t c = 0; c < xv.cols; ++c) dst[c] += cv.data[r] * gr[c];
                      }
                    }
                  });
}

Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t segments) {
  const Tensor& sv = scores.value();
  if (sv.cols != 1 || sv.rows != segment.size()) {
    throw Error(ErrorCode::kShapeMismatch, "segment_softmax: " + sv.shape_string() + " with " +
                                               std::to_string(segment.size()) + " segment ids");
  }
  check_index("segment_softmax", segment, segments);
  std::vector<double> mx(segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < segment.size(); ++e) mx[segment[e]] = std::max(mx[segment[e]], sv.data[e]);
  Tensor out(sv.rows, 1);
  std::vector<double> z(segments, 0.0);
  for (std::size_t e = 0; e < segment.size(); ++e) {
    out.data[e] = std::exp(sv.data[e] - mx[segment[e]]);
    z[segment[e]] += out.data[e];
  }
  for (std::size_t e = 0; e < segment.size(); ++e) out.data[e] /= z[segment[e]];

  Tape& t = *scores.tape;
  Var self{&t, t.size()};
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  return t.record(std::move(out), t.requires_grad(scores),
                  [scores, self, seg = std::move(seg), segments](Tape& t, const Tensor& g) {
                    const Tensor& y = t.value(self);
                    std::vector<double> dot(segments, 0.0);
                    for (std::size_t e = 0; e < seg.size(); ++e) dot[seg[e]] += g.data[e] * y.data[e];
                    Tensor& gs = t.grad_buffer(scores);
                    for (std::size_t e = 0; e < seg.size(); ++e) gs.data[e] += y.data[e] * (g.data[e] - dot[seg[e]]);
                  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  Tape& t = *a.tape;
  return t.record(Tensor::scalar(s), t.requires_grad(a), [a](Tape& t, const Tensor& g) {
    for (double& v : t.grad_buffer(a).data) v += g.data[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw Error(ErrorCode::kShapeMismatch, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var abs_sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += std::abs(v);
  Tape& t = *a.tape;
  return t.record(Tensor::scalar(s), t.requires_grad(a), [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    const Tensor& av = t.value(a);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      const double x = av.data[i];
      ga.data[i] += g.data[0] * static_cast<double>((x > 0.0) - (x < 0.0));
    }
  });
}

}  // namespace sacloc::ad
