#include "genderfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "genderfuse/error.hpp"

namespace genderfuse {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data of " + std::to_string(data_.size()) +
                     " elements does not match shape " + shape_string(shape_));
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
void Param<T>::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor<T>(value.shape());
  } else {
    grad.fill(T{0});
  }
}

// Tape ----------------------------------------------------------------------

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return record(std::move(value), false, nullptr);
}

template <typename T>
Var Tape<T>::variable(Tensor<T> value) {
  return record(std::move(value), true, nullptr);
}

template <typename T>
Var Tape<T>::param(Param<T>& p) {
  if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
  Node node;
  node.param = &p;
  node.requires_grad = p.trainable;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.param != nullptr ? n.param->value : n.value;
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.param != nullptr) return n.param->grad;
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, bool requires_grad, Backward fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
void Tape<T>::backward(Var out) {
  if (value(out).size() != 1) {
    throw ShapeError("backward() needs a single-element output, got " +
                     shape_string(value(out).shape()));
  }
  if (!requires_grad(out)) return;
  grad(out)[0] += T{1};
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this);
  }
}

namespace {

template <typename T>
bool any_grad(const Tape<T>& tape, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (v.valid() && tape.requires_grad(v)) return true;
  }
  return false;
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) +
                     ", got " + shape_string(s));
  }
}

// c[m x n] += a[m x k] * b[k x n], all row-major; vectorizes over n. Zero
// entries of a (padding rows, inactive units) are skipped.
template <typename T>
void gemm_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m,
              std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* __restrict brow = b + p * n;
      for (std::size_t q = 0; q < n; ++q) crow[q] += av * brow[q];
    }
  }
}

// out[cols x rows] = in[rows x cols]^T
template <typename T>
std::vector<T> transpose(const T* in, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
  return out;
}

template <typename T>
Var gather_impl(Tape<T>& tape, Var table, std::span<const std::int32_t> ids, bool strict) {
  const Tensor<T>& tab = tape.value(table);
  require_rank(tab.shape(), 2, "embedding table");
  const std::size_t rows = tab.dim(0);
  const std::size_t d = tab.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t id = ids[i];
    if ((strict && id < 0) || (id >= 0 && static_cast<std::size_t>(id) >= rows)) {
      throw ShapeError("embedding id " + std::to_string(id) + " at index " +
                       std::to_string(i) + " out of range for table of " +
                       std::to_string(rows) + " rows");
    }
  }
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) continue;
    std::copy_n(tab.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  const bool rg = tape.requires_grad(table);
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [=, saved = std::move(saved)](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var{self});
    Tensor<T>& gt = t.grad(table);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      if (saved[i] < 0) continue;
      T* dst = gt.data() + static_cast<std::size_t>(saved[i]) * d;
      const T* src = g.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

}  // namespace

template <typename T>
Var embedding_lookup(Tape<T>& tape, Var table, std::span<const std::int32_t> ids) {
  return gather_impl(tape, table, ids, true);
}

template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const std::int32_t> ids) {
  return gather_impl(tape, table, ids, false);
}

template <typename T>
Var concat_cols(Tape<T>& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols needs at least one operand");
  const std::size_t rows = tape.value(parts[0]).dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    const auto& v = tape.value(p);
    require_rank(v.shape(), 2, "concat_cols operand");
    if (v.dim(0) != rows) {
      throw ShapeError("concat_cols row mismatch: " + shape_string(tape.value(parts[0]).shape()) +
                       " vs " + shape_string(v.shape()));
    }
    widths.push_back(v.dim(1));
    total += v.dim(1);
    rg = rg || tape.requires_grad(p);
  }
  Tensor<T> out({rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = tape.value(parts[k]);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [=](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var{self});
    std::size_t off = 0;
    for (std::size_t k = 0; k < saved.size(); ++k) {
      if (t.requires_grad(saved[k])) {
        Tensor<T>& gp = t.grad(saved[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* src = g.data() + r * total + off;
          T* dst = gp.data() + r * widths[k];
          for (std::size_t j = 0; j < widths[k]; ++j) dst[j] += src[j];
        }
      }
      off += widths[k];
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  Tensor<T> out = tape.value(x);
  out.reshape(std::move(shape));
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(x), [=](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var{self});
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var conv1d(Tape<T>& tape, Var input, Var filters, Var bias, Padding padding) {
  const Tensor<T>& in = tape.value(input);
  const Tensor<T>& w = tape.value(filters);
  const Tensor<T>& b = tape.value(bias);
  if (in.rank() != 2 && in.rank() != 3) {
    throw ShapeError("conv1d input must be [n x c] or [B x n x c], got " + shape_string(in.shape()));
  }
  require_rank(w.shape(), 3, "conv1d filters");
  const bool batched = in.rank() == 3;
  const std::size_t batch = batched ? in.dim(0) : 1;
  const std::size_t n = batched ? in.dim(1) : in.dim(0);
  const std::size_t cin = batched ? in.dim(2) : in.dim(1);
  const std::size_t width = w.dim(0);
  const std::size_t cout = w.dim(2);
  if (w.dim(1) != cin) {
    throw ShapeError("conv1d channel mismatch: input " + shape_string(in.shape()) +
                     " vs filters " + shape_string(w.shape()));
  }
  if (b.size() != cout) {
    throw ShapeError("conv1d bias " + shape_string(b.shape()) + " vs filters " +
                     shape_string(w.shape()));
  }
  if (padding == Padding::kValid && n < width) {
    throw ShapeError("conv1d valid padding needs length >= width (" + std::to_string(n) +
                     " < " + std::to_string(width) + ")");
  }
  const std::size_t m = padding == Padding::kSame ? n : n - width + 1;
  const std::ptrdiff_t offset =
      padding == Padding::kSame ? static_cast<std::ptrdiff_t>((width - 1) / 2) : 0;

  // Output row t reads input row t + j - offset for tap j; for each tap the
  // valid rows form one contiguous block on both sides.
  struct TapRange {
    std::size_t out_begin = 0;
    std::size_t in_begin = 0;
    std::size_t rows = 0;
  };
  std::vector<TapRange> taps(width);
  for (std::size_t j = 0; j < width; ++j) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - offset;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(m),
                                                       static_cast<std::ptrdiff_t>(n) - shift);
    if (hi > lo) {
      taps[j] = {static_cast<std::size_t>(lo), static_cast<std::size_t>(lo + shift),
                 static_cast<std::size_t>(hi - lo)};
    }
  }

  Tensor<T> out(batched ? Shape{batch, m, cout} : Shape{m, cout});
  for (std::size_t r = 0; r < batch * m; ++r) std::copy_n(b.data(), cout, out.data() + r * cout);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t j = 0; j < width; ++j) {
      const TapRange& tr = taps[j];
      if (tr.rows == 0) continue;
      gemm_acc(in.data() + (bi * n + tr.in_begin) * cin, w.data() + j * cin * cout,
               out.data() + (bi * m + tr.out_begin) * cout, tr.rows, cin, cout);
    }
  }

  const bool rg = any_grad(tape, {input, filters, bias});
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [=](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(Var{self});
    const Tensor<T>& x = tp.value(input);
    const Tensor<T>& wt = tp.value(filters);
    if (tp.requires_grad(bias)) {
      Tensor<T>& gb = tp.grad(bias);
      for (std::size_t r = 0; r < batch * m; ++r) {
        const T* grow = g.data() + r * cout;
        for (std::size_t o = 0; o < cout; ++o) gb[o] += grow[o];
      }
    }
    const bool need_w = tp.requires_grad(filters);
    const bool need_x = tp.requires_grad(input);
    if (!need_w && !need_x) return;
    // Gradients reaching a convolution through max-pooling are sparse, so
    // both products walk only the nonzero entries of g.
    std::vector<T> gwt(need_w ? width * cout * cin : 0, T(0));
    std::vector<T> wts;
    if (need_x) {
      wts.resize(width * cout * cin);
      for (std::size_t j = 0; j < width; ++j) {
        const auto wtj = transpose(wt.data() + j * cin * cout, cin, cout);
        std::copy(wtj.begin(), wtj.end(), wts.begin() + j * cout * cin);
      }
    }
    T* gx = need_x ? tp.grad(input).data() : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t t = 0; t < m; ++t) {
        const T* grow = g.data() + (bi * m + t) * cout;
        for (std::size_t o = 0; o < cout; ++o) {
          const T gv = grow[o];
          if (gv == T(0)) continue;
          for (std::size_t j = 0; j < width; ++j) {
            const TapRange& tr = taps[j];
            if (t < tr.out_begin || t >= tr.out_begin + tr.rows) continue;
            const std::size_t src = bi * n + tr.in_begin + (t - tr.out_begin);
            if (need_w) {
              T* __restrict dst = gwt.data() + (j * cout + o) * cin;
              const T* __restrict xr = x.data() + src * cin;
              for (std::size_t c = 0; c < cin; ++c) dst[c] += gv * xr[c];
            }
            if (need_x) {
              T* __restrict dst = gx + src * cin;
              const T* __restrict wr = wts.data() + (j * cout + o) * cin;
              for (std::size_t c = 0; c < cin; ++c) dst[c] += gv * wr[c];
            }
          }
        }
      }
    }
    if (need_w) {
      Tensor<T>& gw = tp.grad(filters);
      for (std::size_t j = 0; j < width; ++j) {
        for (std::size_t o = 0; o < cout; ++o) {
          const T* src = gwt.data() + (j * cout + o) * cin;
          T* dst = gw.data() + j * cin * cout + o;
          for (std::size_t c = 0; c < cin; ++c) dst[c * cout] += src[c];
        }
      }
    }
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(x), [=](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var{self});
    const Tensor<T>& y = t.value(Var{self});
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var max_over_time(Tape<T>& tape, Var input, std::span<const std::size_t> valid_lens) {
  const Tensor<T>& in = tape.value(input);
  if (in.rank() != 2 && in.rank() != 3) {
    throw ShapeError("max_over_time input must be [n x c] or [B x n x c], got " +
                     shape_string(in.shape()));
  }
  const bool batched = in.rank() == 3;
  const std::size_t batch = batched ? in.dim(0) : 1;
  const std::size_t n = batched ? in.dim(1) : in.dim(0);
  const std::size_t c = batched ? in.dim(2) : in.dim(1);
  if (valid_lens.size() != batch) {
    throw ShapeError("max_over_time needs one valid length per sequence (" +
                     std::to_string(valid_lens.size()) + " for batch " + std::to_string(batch) + ")");
  }
  for (std::size_t len : valid_lens) {
    if (len == 0 || len > n) {
      throw ShapeError("max_over_time valid length " + std::to_string(len) +
                       " outside [1, " + std::to_string(n) + "]");
    }
  }
  Tensor<T> out(batched ? Shape{batch, c} : Shape{c});
  std::vector<std::uint32_t> argmax(batch * c, 0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const T* base = in.data() + bi * n * c;
    T* orow = out.data() + bi * c;
    std::uint32_t* arow = argmax.data() + bi * c;
    std::copy_n(base, c, orow);
    for (std::size_t t = 1; t < valid_lens[bi]; ++t) {
      const T* row = base + t * c;
      for (std::size_t j = 0; j < c; ++j) {
        if (row[j] > orow[j]) {
          orow[j] = row[j];
          arow[j] = static_cast<std::uint32_t>(t);
        }
      }
    }
  }
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(input),
                     [=, argmax = std::move(argmax)](Tape<T>& t) {
                       const Tensor<T>& g = t.grad(Var{self});
                       Tensor<T>& gx = t.grad(input);
                       for (std::size_t bi = 0; bi < batch; ++bi) {
                         for (std::size_t j = 0; j < c; ++j) {
                           gx[(bi * n + argmax[bi * c + j]) * c + j] += g[bi * c + j];
                         }
                       }
                     });
}

template <typename T>
Var dense(Tape<T>& tape, Var x, Var weights, Var bias) {
  const Tensor<T>& in = tape.value(x);
  const Tensor<T>& w = tape.value(weights);
  const Tensor<T>& b = tape.value(bias);
  if (in.rank() != 2 || w.rank() != 2 || in.dim(1) != w.dim(0) || b.size() != w.dim(1)) {
    throw ShapeError("dense shape mismatch: input " + shape_string(in.shape()) + ", weights " +
                     shape_string(w.shape()) + ", bias " + shape_string(b.shape()));
  }
  const std::size_t rows = in.dim(0);
  const std::size_t fin = w.dim(0);
  const std::size_t fout = w.dim(1);
  Tensor<T> out({rows, fout});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(b.data(), fout, out.data() + r * fout);
  gemm_acc(in.data(), w.data(), out.data(), rows, fin, fout);

  const bool rg = any_grad(tape, {x, weights, bias});
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg, [=](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var{self});
    if (t.requires_grad(bias)) {
      Tensor<T>& gb = t.grad(bias);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < fout; ++o) gb[o] += g[r * fout + o];
      }
    }
    if (t.requires_grad(weights)) {
      const Tensor<T>& xin = t.value(x);
      auto xt = transpose(xin.data(), rows, fin);
      gemm_acc(xt.data(), g.data(), t.grad(weights).data(), fin, rows, fout);
    }
    if (t.requires_grad(x)) {
      auto wt = transpose(t.value(weights).data(), fin, fout);
      gemm_acc(g.data(), wt.data(), t.grad(x).data(), rows, fout, fin);
    }
  });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormStats<T>& stats, Mode mode,
               double momentum, double eps) {
  const Tensor<T>& in = tape.value(x);
  require_rank(in.shape(), 2, "batch_norm input");
  const std::size_t rows = in.dim(0);
  const std::size_t f = in.dim(1);
  const Tensor<T>& gm = tape.value(gamma);
  const Tensor<T>& bt = tape.value(beta);
  if (gm.size() != f || bt.size() != f) {
    throw ShapeError("batch_norm parameter size mismatch for input " + shape_string(in.shape()));
  }
  if (stats.running_mean.size() != f) {
    stats.running_mean = Tensor<T>({f}, T{0});
    stats.running_var = Tensor<T>({f}, T{1});
  }
  if (mode == Mode::kTrain && rows < 2) {
    throw ShapeError("batch_norm in train mode needs a batch of at least 2, got " +
                     std::to_string(rows));
  }
  Tensor<T> out({rows, f});
  Tensor<T> xhat({rows, f});
  std::vector<T> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) {
    T mean;
    T var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += static_cast<double>(in(r, j));
      const double mu = s / static_cast<double>(rows);
      double ss = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = static_cast<double>(in(r, j)) - mu;
        ss += d * d;
      }
      mean = static_cast<T>(mu);
      var = static_cast<T>(ss / static_cast<double>(rows));
      stats.running_mean[j] = static_cast<T>(momentum * stats.running_mean[j] + (1.0 - momentum) * mean);
      stats.running_var[j] = static_cast<T>(momentum * stats.running_var[j] + (1.0 - momentum) * var);
    } else {
      mean = stats.running_mean[j];
      var = stats.running_var[j];
    }
    inv_std[j] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    for (std::size_t r = 0; r < rows; ++r) {
      const T xh = (in(r, j) - mean) * inv_std[j];
      xhat(r, j) = xh;
      out(r, j) = gm[j] * xh + bt[j];
    }
  }
  const bool rg = any_grad(tape, {x, gamma, beta});
  const bool train = mode == Mode::kTrain;
  const std::size_t self = tape.size();
  return tape.record(std::move(out), rg,
                     [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t) {
                       const Tensor<T>& g = t.grad(Var{self});
                       const Tensor<T>& gmv = t.value(gamma);
                       std::vector<T> sum_g(f, T{0});
                       std::vector<T> sum_gx(f, T{0});
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < f; ++j) {
                           sum_g[j] += g(r, j);
                           sum_gx[j] += g(r, j) * xhat(r, j);
                         }
                       }
                       if (t.requires_grad(gamma)) {
                         Tensor<T>& gg = t.grad(gamma);
                         for (std::size_t j = 0; j < f; ++j) gg[j] += sum_gx[j];
                       }
                       if (t.requires_grad(beta)) {
                         Tensor<T>& gb = t.grad(beta);
                         for (std::size_t j = 0; j < f; ++j) gb[j] += sum_g[j];
                       }
                       if (t.requires_grad(x)) {
                         Tensor<T>& gx = t.grad(x);
                         const T inv_n = T{1} / static_cast<T>(rows);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < f; ++j) {
                             const T scale = gmv[j] * inv_std[j];
                             if (train) {
                               gx(r, j) += scale * (g(r, j) - sum_g[j] * inv_n -
                                                    xhat(r, j) * sum_gx[j] * inv_n);
                             } else {
                               gx(r, j) += scale * g(r, j);
                             }
                           }
                         }
                       }
                     });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) return x;
  Tensor<T> out = tape.value(x);
  std::vector<T> mask(out.size());
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < rate ? T{0} : scale;
    out[i] *= mask[i];
  }
  const std::size_t self = tape.size();
  return tape.record(std::move(out), tape.requires_grad(x),
                     [=, mask = std::move(mask)](Tape<T>& t) {
                       const Tensor<T>& g = t.grad(Var{self});
                       Tensor<T>& gx = t.grad(x);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                     });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.dim(1);
  Tensor<T> probs({rows, k});
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = logits(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logits(r, j));
    T total{0};
    for (std::size_t j = 0; j < k; ++j) {
      probs(r, j) = std::exp(logits(r, j) - mx);
      total += probs(r, j);
    }
    for (std::size_t j = 0; j < k; ++j) probs(r, j) /= total;
  }
  return probs;
}

template <typename T>
SoftmaxXent<T> softmax_xent(Tape<T>& tape, Var logits, std::span<const int> labels) {
  const Tensor<T>& z = tape.value(logits);
  require_rank(z.shape(), 2, "softmax_xent logits");
  const std::size_t rows = z.dim(0);
  const std::size_t k = z.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("softmax_xent has " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(k) + ")");
    }
  }
  Tensor<T> probs = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = z(r, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z(r, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j) lse += std::exp(static_cast<double>(z(r, j) - mx));
    loss += std::log(lse) + static_cast<double>(mx) - static_cast<double>(z(r, labels[r]));
  }
  loss /= static_cast<double>(rows);
  std::vector<int> saved(labels.begin(), labels.end());
  const std::size_t self = tape.size();
  SoftmaxXent<T> result;
  result.probs = probs;
  result.loss = tape.record(Tensor<T>({1}, static_cast<T>(loss)), tape.requires_grad(logits),
                            [=, saved = std::move(saved)](Tape<T>& t) {
                              const T g = t.grad(Var{self})[0] / static_cast<T>(rows);
                              Tensor<T>& gz = t.grad(logits);
                              for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t j = 0; j < k; ++j) {
                                  const T onehot = static_cast<int>(j) == saved[r] ? T{1} : T{0};
                                  gz(r, j) += g * (probs(r, j) - onehot);
                                }
                              }
                            });
  return result;
}

template <typename T>
Var l2_penalty(Tape<T>& tape, std::span<const Var> weights, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("L2 strength must be non-negative");
  double total = 0.0;
  bool rg = false;
  for (Var w : weights) {
    for (T v : tape.value(w).values()) total += static_cast<double>(v) * static_cast<double>(v);
    rg = rg || tape.requires_grad(w);
  }
  std::vector<Var> saved(weights.begin(), weights.end());
  const std::size_t self = tape.size();
  return tape.record(Tensor<T>({1}, static_cast<T>(lambda * total)), rg && lambda > 0.0,
                     [=](Tape<T>& t) {
                       const T g = t.grad(Var{self})[0] * static_cast<T>(2.0 * lambda);
                       for (Var w : saved) {
                         if (!t.requires_grad(w)) continue;
                         const Tensor<T>& v = t.value(w);
                         Tensor<T>& gw = t.grad(w);
                         for (std::size_t i = 0; i < v.size(); ++i) gw[i] += g * v[i];
                       }
                     });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  if (va.shape() != vb.shape()) {
    throw ShapeError("add shape mismatch: " + shape_string(va.shape()) + " vs " +
                     shape_string(vb.shape()));
  }
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const std::size_t self = tape.size();
  return tape.record(std::move(out), any_grad(tape, {a, b}), [=](Tape<T>& t) {
    const Tensor<T>& g = t.grad(Var{self});
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Tensor<T>& gv = t.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  double total = 0.0;
  for (T v : tape.value(x).values()) total += static_cast<double>(v);
  const std::size_t self = tape.size();
  return tape.record(Tensor<T>({1}, static_cast<T>(total)), tape.requires_grad(x),
                     [=](Tape<T>& t) {
                       const T g = t.grad(Var{self})[0];
                       for (auto& v : t.grad(x).values()) v += g;
                     });
}

// Optimizer -----------------------------------------------------------------

template <typename T>
void Optimizer<T>::step(std::span<Param<T>* const> params) {
  for (const Param<T>* p : params) {
    if (!p->trainable) continue;
    if (p->grad.shape() != p->value.shape()) {
      throw ShapeError("gradient of '" + p->name + "' has shape " + shape_string(p->grad.shape()) +
                       ", parameter has " + shape_string(p->value.shape()));
    }
    for (T g : p->grad.values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw DataError("non-finite gradient in parameter '" + p->name + "'");
      }
    }
  }
  if (m_.empty()) {
    for (const Param<T>* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) {
    throw ShapeError("optimizer was bound to " + std::to_string(m_.size()) +
                     " parameters, step() got " + std::to_string(params.size()));
  }
  ++step_;
  const double lr = config_.lr;
  if (config_.kind == OptimizerKind::kSgd) {
    for (Param<T>* p : params) {
      if (!p->trainable) continue;
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->value[i] -= static_cast<T>(lr) * p->grad[i];
      }
    }
    return;
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const T eps = static_cast<T>(config_.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>* p = params[k];
    if (!p->trainable) continue;
    if (m_[k].shape() != p->value.shape()) {
      throw ShapeError("optimizer state for '" + p->name + "' has mismatched shape");
    }
    T* m = m_[k].data();
    T* v = v_[k].data();
    T* w = p->value.data();
    const T* g = p->grad.data();
    const T tb1 = static_cast<T>(b1);
    const T tb2 = static_cast<T>(b2);
    const T tc1 = static_cast<T>(1.0 / corr1);
    const T tc2 = static_cast<T>(1.0 / corr2);
    const T tlr = static_cast<T>(lr);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (g[i] == T{0} && m[i] == T{0} && v[i] == T{0}) continue;
      m[i] = tb1 * m[i] + (T{1} - tb1) * g[i];
      v[i] = tb2 * v[i] + (T{1} - tb2) * g[i] * g[i];
      const T mhat = m[i] * tc1;
      const T vhat = v[i] * tc2;
      w[i] -= tlr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Gradient checking ---------------------------------------------------------

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const GradCheckEntry& e) { return e.failures == 0; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

std::string GradCheckReport::to_string() const {
  std::ostringstream out;
  out.setf(std::ios::scientific);
  out.precision(3);
  for (const auto& e : entries) {
    out << (e.failures == 0 ? "ok   " : "FAIL ") << e.name << "  coords=" << e.coords_checked
        << "  max_rel_err=" << e.max_rel_error;
    if (e.failures > 0) out << "  failures=" << e.failures;
    out << '\n';
  }
  out << "max relative error " << max_rel_error() << " (tolerance " << tolerance << ")\n";
  return out.str();
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<Param<double>* const> params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed, 0x67636b);
  for (Param<double>* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    std::vector<std::size_t> coords(p->value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = p->value[i];
      double err = std::numeric_limits<double>::infinity();
      double step = options.step;
      for (std::size_t attempt = 0; attempt <= options.refinements && !(err < options.tolerance);
           ++attempt, step /= 10.0) {
        p->value[i] = saved + step;
        const double up = loss();
        p->value[i] = saved - step;
        const double down = loss();
        p->value[i] = saved;
        err = std::min(err, relative_error(p->grad[i], (up - down) / (2.0 * step)));
      }
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      if (!(err < options.tolerance)) ++entry.failures;
      ++entry.coords_checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

// Explicit instantiations ---------------------------------------------------

#define GENDERFUSE_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                                    \
  template struct Param<T>;                                                                    \
  template class Tape<T>;                                                                      \
  template class Optimizer<T>;                                                                 \
  template Var embedding_lookup<T>(Tape<T>&, Var, std::span<const std::int32_t>);              \
  template Var gather_rows<T>(Tape<T>&, Var, std::span<const std::int32_t>);                   \
  template Var concat_cols<T>(Tape<T>&, std::span<const Var>);                                 \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                               \
  template Var conv1d<T>(Tape<T>&, Var, Var, Var, Padding);                                    \
  template Var relu<T>(Tape<T>&, Var);                                                         \
  template Var max_over_time<T>(Tape<T>&, Var, std::span<const std::size_t>);                  \
  template Var dense<T>(Tape<T>&, Var, Var, Var);                                              \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, BatchNormStats<T>&, Mode, double, double); \
  template Var dropout<T>(Tape<T>&, Var, double, Mode, Rng&);                                  \
  template SoftmaxXent<T> softmax_xent<T>(Tape<T>&, Var, std::span<const int>);                \
  template Var l2_penalty<T>(Tape<T>&, std::span<const Var>, double);                          \
  template Var add<T>(Tape<T>&, Var, Var);                                                     \
  template Var sum<T>(Tape<T>&, Var);                                                          \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);

GENDERFUSE_INSTANTIATE(float)
GENDERFUSE_INSTANTIATE(double)

#undef GENDERFUSE_INSTANTIATE

}  // namespace genderfuse
