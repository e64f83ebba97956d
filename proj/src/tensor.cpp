#include "spt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "spt/errors.hpp"

namespace spt {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor make_tensor(std::shared_ptr<TensorNode> node) { return Tensor(std::move(node)); }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " elements, got " +
                         std::to_string(data.size()));
  }
  node_ = std::make_shared<const TensorNode>(TensorNode{std::move(shape), std::move(data), requires_grad});
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  return Tensor(std::move(shape), std::move(data), true);
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on a tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

bool Tensor::all_finite() const {
  return std::all_of(node_->data.begin(), node_->data.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::detach() const {
  if (!requires_grad()) return *this;
  return Tensor(node_->shape, node_->data, false);
}

std::span<const double> GradientSet::view(const Tensor& t) const {
  auto it = grads_.find(t.node());
  if (it == grads_.end()) return {};
  return it->second;
}

Tensor GradientSet::grad(const Tensor& t) const {
  auto it = grads_.find(t.node());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), it->second);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, Adjoint adjoint) {
  entries_.push_back(Entry{output, std::move(inputs), std::move(adjoint)});
}

GradientSet backward(const Tensor& loss, const Tape& tape) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  GradientSet result;
  if (!loss.requires_grad()) return result;
  auto& grads = result.grads_;
  grads[loss.node()] = {1.0};
  std::vector<std::vector<double>*> buffers;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    auto found = grads.find(it->output.node());
    if (found == grads.end()) continue;
    buffers.clear();
    for (const auto& input : it->inputs) {
      if (!input.requires_grad()) {
        buffers.push_back(nullptr);
        continue;
      }
      auto& buffer = grads[input.node()];
      if (buffer.empty()) buffer.assign(input.size(), 0.0);
      buffers.push_back(&buffer);
    }
    // Node-based map: `found` stays valid across the inserts above.
    it->adjoint(found->second, buffers);
  }
  return result;
}

namespace {

template <typename AdjointFn>
Tensor finish(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, AdjointFn&& adjoint) {
  Tape* tape = g_active_tape;
  bool track = false;
  if (tape != nullptr) {
    track = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  }
  auto out = make_tensor(std::make_shared<TensorNode>(TensorNode{std::move(shape), std::move(data), track}));
  if (track) tape->record(out, std::move(inputs), Tape::Adjoint(std::forward<AdjointFn>(adjoint)));
  return out;
}

// Variant for adjoints that need the forward result.
template <typename Factory>
Tensor finish_with_output(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, Factory&& factory) {
  Tape* tape = g_active_tape;
  bool track = false;
  if (tape != nullptr) {
    track = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  }
  auto out = make_tensor(std::make_shared<TensorNode>(TensorNode{std::move(shape), std::move(data), track}));
  if (track) tape->record(out, std::move(inputs), Tape::Adjoint(factory(out)));
  return out;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_to_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
                       shape_to_string(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return finish({m, n}, std::move(c), {a, b}, [a, b, m, k, n](auto gout, auto gin) {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    if (gin[0]) {
      double* ga = gin[0]->data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gout.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = pb + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (gin[1]) {
      double* gb = gin[1]->data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gout.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = pa[i * k + p];
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return finish({n, m}, std::move(out), {a}, [m, n](auto gout, auto gin) {
    double* g = gin[0]->data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gout[j * m + i];
  });
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = !same && a.rank() == 0;
  const bool b_scalar = !same && b.rank() == 0;
  if (!same && !a_scalar && !b_scalar) mismatch(op == ElementwiseOp::add ? "add" : "mul", a, b);
  const Tensor& big = a_scalar ? b : a;
  const std::size_t n = big.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  const std::size_t sa = a_scalar ? 0 : 1;
  const std::size_t sb = b_scalar ? 0 : 1;
  if (op == ElementwiseOp::add) {
    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] + pb[i * sb];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i * sa] * pb[i * sb];
  }
  return finish(big.shape(), std::move(out), {a, b}, [a, b, op, n, sa, sb](auto gout, auto gin) {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    if (gin[0]) {
      double* g = gin[0]->data();
      for (std::size_t i = 0; i < n; ++i) g[i * sa] += op == ElementwiseOp::add ? gout[i] : gout[i] * pb[i * sb];
    }
    if (gin[1]) {
      double* g = gin[1]->data();
      for (std::size_t i = 0; i < n; ++i) g[i * sb] += op == ElementwiseOp::add ? gout[i] : gout[i] * pa[i * sa];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::add); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::mul); }
Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return finish(a.shape(), std::move(out), {a}, [factor](auto gout, auto gin) {
    double* g = gin[0]->data();
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += factor * gout[i];
  });
}

Tensor rowwise_masked_softmax(const Tensor& logits, const AttentionMask& mask) {
  require_rank(logits, 2, "rowwise_masked_softmax");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (mask.rows() != rows || mask.cols() != cols) {
    throw DimensionError("rowwise_masked_softmax: logits " + shape_to_string(logits.shape()) + " vs mask [" +
                         std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) + "]");
  }
  std::vector<double> out(rows * cols, 0.0);
  const double* x = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask.row_support(r) == 0) {
      throw DegenerateRowError("rowwise_masked_softmax: row " + std::to_string(r) + " has no support");
    }
    const auto bits = mask.row(r);
    const double* xr = x + r * cols;
    double* yr = out.data() + r * cols;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (bits[c]) peak = std::max(peak, xr[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (bits[c]) {
        yr[c] = std::exp(xr[c] - peak);
        total += yr[c];
      }
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c)
      if (bits[c]) yr[c] *= inv;
  }
  return finish_with_output({rows, cols}, std::move(out), {logits}, [rows, cols](const Tensor& probs) {
    return [probs, rows, cols](auto gout, auto gin) {
      const double* y = probs.data().data();
      double* g = gin[0]->data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y + r * cols;
        const double* gr = gout.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += yr[c] * (gr[c] - dot);
      }
    };
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != d) mismatch("layer_norm", x, gain);
  if (bias.rank() != 1 || bias.dim(0) != d) mismatch("layer_norm", x, bias);
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  auto normed = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* px = x.data().data();
  const double* pg = gain.data().data();
  const double* pb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (xr[c] - mu) * inv;
      (*normed)[r * d + c] = xh;
      out[r * d + c] = xh * pg[c] + pb[c];
    }
  }
  return finish(x.shape(), std::move(out), {x, gain, bias}, [gain, normed, inv_std, rows, d](auto gout, auto gin) {
    const double* pg = gain.data().data();
    const double* xh = normed->data();
    if (gin[2]) {
      double* g = gin[2]->data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += gout[r * d + c];
    }
    if (gin[1]) {
      double* g = gin[1]->data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += gout[r * d + c] * xh[r * d + c];
    }
    if (gin[0]) {
      double* g = gin[0]->data();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_g = 0.0, mean_gx = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double gh = gout[r * d + c] * pg[c];
          mean_g += gh;
          mean_gx += gh * xh[r * d + c];
        }
        mean_g *= inv_d;
        mean_gx *= inv_d;
        const double inv = (*inv_std)[r];
        for (std::size_t c = 0; c < d; ++c) {
          const double gh = gout[r * d + c] * pg[c];
          g[r * d + c] += inv * (gh - mean_g - xh[r * d + c] * mean_gx);
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * std::numbers::sqrt2 / 2.0));
  }
  return finish(x.shape(), std::move(out), {x}, [x](auto gout, auto gin) {
    double* g = gin[0]->data();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < gout.size(); ++i) {
      const double v = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += gout[i] * (cdf + v * pdf);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) mismatch("linear", x, w);
  if (b.rank() != 1 || b.dim(0) != w.dim(1)) mismatch("linear", w, b);
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> c(m * n);
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c.data() + i * n;
    std::copy(pb, pb + n, row);
    for (std::size_t p = 0; p < k; ++p) {
      const double s = px[i * k + p];
      const double* wrow = pw + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * wrow[j];
    }
  }
  return finish({m, n}, std::move(c), {x, w, b}, [x, w, m, k, n](auto gout, auto gin) {
    const double* px = x.data().data();
    const double* pw = w.data().data();
    if (gin[0]) {
      double* gx = gin[0]->data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gout.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* wrow = pw + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * wrow[j];
          gx[i * k + p] += acc;
        }
      }
    }
    if (gin[1]) {
      double* gw = gin[1]->data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gout.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = px[i * k + p];
          double* gwrow = gw + p * n;
          for (std::size_t j = 0; j < n; ++j) gwrow[j] += s * grow[j];
        }
      }
    }
    if (gin[2]) {
      double* gb = gin[2]->data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += gout[i * n + j];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  const std::size_t cols = x.dim(1);
  if (count == 0 || begin + count > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  auto first = x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols);
  std::vector<double> out(first, first + static_cast<std::ptrdiff_t>(count * cols));
  return finish({count, cols}, std::move(out), {x}, [begin, cols](auto gout, auto gin) {
    double* g = gin[0]->data() + begin * cols;
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (count == 0 || begin + count > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = x[r * cols + begin + c];
  return finish({rows, count}, std::move(out), {x}, [rows, cols, begin, count](auto gout, auto gin) {
    double* g = gin[0]->data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) g[r * cols + begin + c] += gout[r * count + c];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) mismatch("concat_rows", parts[0], p);
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.size());
  }
  return finish({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                [sizes](auto gout, auto gin) {
                  std::size_t offset = 0;
                  for (std::size_t i = 0; i < sizes.size(); ++i) {
                    if (gin[i]) {
                      double* g = gin[i]->data();
                      for (std::size_t j = 0; j < sizes[i]; ++j) g[j] += gout[offset + j];
                    }
                    offset += sizes[i];
                  }
                });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) mismatch("concat_cols", parts[0], p);
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) out[r * cols + offset + c] = p[r * w + c];
    offset += w;
  }
  return finish({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                [widths, rows, cols](auto gout, auto gin) {
                  std::size_t offset = 0;
                  for (std::size_t i = 0; i < widths.size(); ++i) {
                    const std::size_t w = widths[i];
                    if (gin[i]) {
                      double* g = gin[i]->data();
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < w; ++c) g[r * w + c] += gout[r * cols + offset + c];
                    }
                    offset += w;
                  }
                });
}

Tensor select(const Tensor& x, std::size_t index) {
  if (x.rank() == 0 || index >= x.dim(0)) {
    throw DimensionError("select: index " + std::to_string(index) + " out of range for " +
                         shape_to_string(x.shape()));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t stride = shape_numel(shape);
  auto first = x.data().begin() + static_cast<std::ptrdiff_t>(index * stride);
  std::vector<double> out(first, first + static_cast<std::ptrdiff_t>(stride));
  return finish(std::move(shape), std::move(out), {x}, [index, stride](auto gout, auto gin) {
    double* g = gin[0]->data() + index * stride;
    for (std::size_t i = 0; i < stride; ++i) g[i] += gout[i];
  });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  Shape shape = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != shape) mismatch("stack", parts[0], p);
  }
  const std::size_t stride = parts[0].size();
  shape.insert(shape.begin(), parts.size());
  std::vector<double> out;
  out.reserve(stride * parts.size());
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return finish(std::move(shape), std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                [stride](auto gout, auto gin) {
                  for (std::size_t i = 0; i < gin.size(); ++i) {
                    if (!gin[i]) continue;
                    double* g = gin[i]->data();
                    for (std::size_t j = 0; j < stride; ++j) g[j] += gout[i * stride + j];
                  }
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return finish(std::move(shape), std::move(out), {x}, [](auto gout, auto gin) {
    double* g = gin[0]->data();
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return finish(Shape{}, {total}, {x}, [](auto gout, auto gin) {
    auto& g = *gin[0];
    for (auto& v : g) v += gout[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

}  // namespace spt
