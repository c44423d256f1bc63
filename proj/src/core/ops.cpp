#include "mmtraj/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "mmtraj/errors.hpp"

namespace mmtraj::ops {

namespace {

using detail::Node;

Tensor finish(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
              std::function<void(Node&)> backward, const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
#ifdef MMTRAJ_FINITE_CHECKS
  for (double v : node->data) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
#else
  (void)op;
#endif
  if (Tape* tape = Tape::active()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->is_leaf = false;
      node->parents.reserve(inputs.size());
      for (const auto& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(backward);
      tape->record(node);
    }
  }
  return Tensor::from_node(std::move(node));
}

// Row-major strides.
std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

void check_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + shape_str(x.shape()));
  }
}

void check_mask(const Tensor& x, const Mask* mask, const char* op) {
  if (mask && mask->shape != x.shape()) {
    throw DimensionError(std::string(op) + ": mask shape " + shape_str(mask->shape) +
                         " does not match " + shape_str(x.shape()));
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<long>(small.size()));
}

// Resolves the output shape of a suffix-broadcast binary op.
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.numel() >= b.numel() && is_suffix(b.shape(), a.shape())) return a.shape();
  if (b.numel() > a.numel() && is_suffix(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are not broadcast-compatible");
}

template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df, const char* op) {
  const auto xs = x.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  return finish(
      x.shape(), std::move(out), {x},
      [df](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.data[i], self.data[i]);
      },
      op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a, b, "add");
  const std::size_t n = numel(out_shape), na = a.numel(), nb = b.numel();
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[i % na] + bd[i % nb];
  return finish(
      std::move(out_shape), std::move(out), {a, b},
      [na, nb](Node& self) {
        for (std::size_t side = 0; side < 2; ++side) {
          Node& p = *self.parents[side];
          if (!p.requires_grad) continue;
          const std::size_t m = side == 0 ? na : nb;
          auto& g = p.grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % m] += self.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a, b, "sub");
  const std::size_t n = numel(out_shape), na = a.numel(), nb = b.numel();
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[i % na] - bd[i % nb];
  return finish(
      std::move(out_shape), std::move(out), {a, b},
      [na, nb](Node& self) {
        for (std::size_t side = 0; side < 2; ++side) {
          Node& p = *self.parents[side];
          if (!p.requires_grad) continue;
          const std::size_t m = side == 0 ? na : nb;
          const double sign = side == 0 ? 1.0 : -1.0;
          auto& g = p.grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % m] += sign * self.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a, b, "mul");
  const std::size_t n = numel(out_shape), na = a.numel(), nb = b.numel();
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[i % na] * bd[i % nb];
  return finish(
      std::move(out_shape), std::move(out), {a, b},
      [na, nb](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
          auto& g = pa.grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % na] += self.grad[i] * pb.data[i % nb];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % nb] += self.grad[i] * pa.data[i % na];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2], k = as.back(), n = bs.back();
  const bool shared_b = bs.size() == 2;
  const bool batch_ok =
      shared_b || (as.size() == bs.size() && std::equal(as.begin(), as.end() - 2, bs.begin()));
  if (bs[bs.size() - 2] != k || !batch_ok) {
    throw DimensionError("matmul shape mismatch: " + shape_str(as) + " x " + shape_str(bs));
  }
  const std::size_t batch = prod(as, 0, as.size() - 2);
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);

  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* Ab = A + bi * m * k;
    const double* Bb = shared_b ? B : B + bi * k * n;
    double* Ob = out.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* orow = Ob + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = Ab[i * k + p];
        const double* brow = Bb + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  return finish(
      std::move(out_shape), std::move(out), {a, b},
      [batch, m, k, n, shared_b](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* G = self.grad.data();
        if (pa.requires_grad) {
          auto& ga = pa.grad_buffer();
          // dA = G B^T, accumulated row-wise against B^T so the inner loop is contiguous.
          std::vector<double> bt(k * n);
          for (std::size_t bi = 0; bi < batch; ++bi) {
            const double* Bb = pb.data.data() + (shared_b ? 0 : bi * k * n);
            if (bi == 0 || !shared_b) {
              for (std::size_t p = 0; p < k; ++p) {
                for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = Bb[p * n + j];
              }
            }
            const double* Gb = G + bi * m * n;
            double* GAb = ga.data() + bi * m * k;
            for (std::size_t i = 0; i < m; ++i) {
              double* garow = GAb + i * k;
              for (std::size_t j = 0; j < n; ++j) {
                const double g = Gb[i * n + j];
                const double* btrow = bt.data() + j * k;
                for (std::size_t p = 0; p < k; ++p) garow[p] += g * btrow[p];
              }
            }
          }
        }
        if (pb.requires_grad) {
          auto& gb = pb.grad_buffer();
          for (std::size_t bi = 0; bi < batch; ++bi) {
            const double* Ab = pa.data.data() + bi * m * k;
            const double* Gb = G + bi * m * n;
            double* GBb = gb.data() + (shared_b ? 0 : bi * k * n);
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = Gb + i * n;
              for (std::size_t p = 0; p < k; ++p) {
                const double av = Ab[i * k + p];
                double* gbrow = GBb + p * n;
                for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
              }
            }
          }
        }
      },
      "matmul");
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  if (axes.size() != in.size()) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for shape " + shape_str(in));
  }
  std::vector<bool> seen(in.size(), false);
  Shape out_shape(in.size());
  for (std::size_t d = 0; d < axes.size(); ++d) {
    if (axes[d] >= in.size() || seen[axes[d]]) throw DimensionError("permute: invalid axis list");
    seen[axes[d]] = true;
    out_shape[d] = in[axes[d]];
  }
  const auto in_strides = strides_of(in);
  const std::size_t n = a.numel();
  // src[i] is the input offset of output element i.
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) off += idx[d] * in_strides[axes[d]];
    src[i] = off;
    for (std::size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  const auto ad = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[src[i]];
  return finish(
      std::move(out_shape), std::move(out), {a},
      [src = std::move(src)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
      },
      "permute");
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(a.shape()));
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, axes);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  const auto ad = a.data();
  return finish(
      std::move(shape), std::vector<double>(ad.begin(), ad.end()), {a},
      [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

Tensor expand(const Tensor& a, const Shape& shape) {
  const Shape& in = a.shape();
  if (in.size() != shape.size()) {
    throw DimensionError("expand " + shape_str(in) + " -> " + shape_str(shape) + ": rank differs");
  }
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (in[d] != shape[d] && in[d] != 1) {
      throw DimensionError("expand " + shape_str(in) + " -> " + shape_str(shape));
    }
  }
  const auto in_strides = strides_of(in);
  const std::size_t n = numel(shape);
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) off += (in[d] == 1 ? 0 : idx[d]) * in_strides[d];
    src[i] = off;
    for (std::size_t d = idx.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  const auto ad = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[src[i]];
  return finish(
      shape, std::move(out), {a},
      [src = std::move(src)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
      },
      "expand");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  check_axis(parts[0], axis, "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = prod(first, 0, axis);
  const std::size_t tail = prod(first, axis + 1, first.size());
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * tail);
  const std::size_t row = out_shape[axis] * tail;
  std::vector<double> out(outer * row);
  std::size_t col = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pd = parts[pi].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + static_cast<long>(o * widths[pi]), widths[pi],
                  out.begin() + static_cast<long>(o * row + col));
    }
    col += widths[pi];
  }
  return finish(
      std::move(out_shape), std::move(out), parts,
      [outer, row, widths](Node& self) {
        std::size_t c = 0;
        for (std::size_t pi = 0; pi < widths.size(); ++pi) {
          Node& p = *self.parents[pi];
          if (p.requires_grad) {
            auto& g = p.grad_buffer();
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t j = 0; j < widths[pi]; ++j) g[o * widths[pi] + j] += self.grad[o * row + c + j];
            }
          }
          c += widths[pi];
        }
      },
      "concat");
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(a, axis, "slice");
  const Shape& in = a.shape();
  if (start + length > in[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(axis) + " of " + shape_str(in));
  }
  Shape out_shape = in;
  out_shape[axis] = length;
  const std::size_t outer = prod(in, 0, axis);
  const std::size_t tail = prod(in, axis + 1, in.size());
  const std::size_t in_row = in[axis] * tail;
  const std::size_t out_row = length * tail;
  const std::size_t skip = start * tail;
  const auto ad = a.data();
  std::vector<double> out(outer * out_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(ad.begin() + static_cast<long>(o * in_row + skip), out_row,
                out.begin() + static_cast<long>(o * out_row));
  }
  return finish(
      std::move(out_shape), std::move(out), {a},
      [outer, in_row, out_row, skip](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < out_row; ++j) g[o * in_row + skip + j] += self.grad[o * out_row + j];
        }
      },
      "slice");
}

Tensor softmax(const Tensor& x, std::size_t axis, const Mask* mask) {
  check_axis(x, axis, "softmax");
  check_mask(x, mask, "softmax");
  const Shape& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  const auto xd = x.data();
  std::vector<double> out(xd.size(), 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = base + l * inner;
        if (mask && !(*mask)[i]) continue;
        if (std::isnan(xd[i])) throw NumericError("softmax: NaN input");
        mx = std::max(mx, xd[i]);
        any = true;
      }
      if (!any) continue;
      double total = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = base + l * inner;
        if (mask && !(*mask)[i]) continue;
        out[i] = std::exp(xd[i] - mx);
        total += out[i];
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  return finish(
      s, std::move(out), {x},
      [outer, len, inner](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        const auto& y = self.data;
        const auto& gy = self.grad;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t l = 0; l < len; ++l) dot += y[base + l * inner] * gy[base + l * inner];
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t i = base + l * inner;
              g[i] += y[i] * (gy[i] - dot);
            }
          }
        }
      },
      "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("layer_norm: empty feature axis in " + shape_str(x.shape()));
  }
  if (eps <= 0.0) throw UsageError("layer_norm: eps must be positive");
  const std::size_t f = x.shape().back();
  if (gain.shape() != Shape{f} || bias.shape() != Shape{f}) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " for feature size " + std::to_string(f));
  }
  const std::size_t rows = x.numel() / f;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<double> xhat(xd.size()), rstd(rows), out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * f;
    double mu = 0.0;
    for (std::size_t j = 0; j < f; ++j) mu += row[j];
    mu /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(f);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < f; ++j) {
      const std::size_t i = r * f + j;
      xhat[i] = (row[j] - mu) * rstd[r];
      out[i] = xhat[i] * gd[j] + bd[j];
    }
  }
  return finish(
      x.shape(), std::move(out), {x, gain, bias},
      [rows, f, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& gy = self.grad;
        if (pg.requires_grad) {
          auto& g = pg.grad_buffer();
          for (std::size_t i = 0; i < gy.size(); ++i) g[i % f] += gy[i] * xhat[i];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t i = 0; i < gy.size(); ++i) g[i % f] += gy[i];
        }
        if (px.requires_grad) {
          auto& g = px.grad_buffer();
          const auto& gain_d = pg.data;
          const double inv_f = 1.0 / static_cast<double>(f);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < f; ++j) {
              const double dxh = gy[r * f + j] * gain_d[j];
              m1 += dxh;
              m2 += dxh * xhat[r * f + j];
            }
            m1 *= inv_f;
            m2 *= inv_f;
            for (std::size_t j = 0; j < f; ++j) {
              const std::size_t i = r * f + j;
              g[i] += rstd[r] * (gy[i] * gain_d[j] - m1 - xhat[i] * m2);
            }
          }
        }
      },
      "layer_norm");
}

Tensor cumsum(const Tensor& x, std::size_t axis) {
  check_axis(x, axis, "cumsum");
  const Shape& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  const auto xd = x.data();
  std::vector<double> out(xd.begin(), xd.end());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 1; l < len; ++l) {
      const std::size_t cur = (o * len + l) * inner;
      const std::size_t prev = cur - inner;
      for (std::size_t in = 0; in < inner; ++in) out[cur + in] = out[prev + in] + xd[cur + in];
    }
  }
  return finish(
      s, std::move(out), {x},
      [outer, len, inner](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            double acc = 0.0;
            for (std::size_t l = len; l-- > 0;) {
              const std::size_t i = (o * len + l) * inner + in;
              acc += self.grad[i];
              g[i] += acc;
            }
          }
        }
      },
      "cumsum");
}

namespace {

Tensor reduce_axis(const Tensor& x, std::size_t axis, const Mask* mask, bool average, const char* op) {
  check_axis(x, axis, op);
  check_mask(x, mask, op);
  const Shape& s = x.shape();
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d != axis) out_shape.push_back(s[d]);
  }
  const auto xd = x.data();
  std::vector<double> out(outer * inner, 0.0);
  std::vector<double> weight(outer * inner, 1.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double acc = 0.0;
      std::size_t count = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = (o * len + l) * inner + in;
        if (mask && !(*mask)[i]) continue;
        acc += xd[i];
        ++count;
      }
      if (average) {
        if (count == 0) {
          throw DegenerateInputError(std::string(op) + ": slice with no unmasked entries");
        }
        weight[o * inner + in] = 1.0 / static_cast<double>(count);
      }
      out[o * inner + in] = acc * weight[o * inner + in];
    }
  }
  Mask keep = mask ? *mask : Mask();
  return finish(
      std::move(out_shape), std::move(out), {x},
      [outer, len, inner, weight = std::move(weight), keep = std::move(keep)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        const bool masked = !keep.data.empty();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t l = 0; l < len; ++l) {
            for (std::size_t in = 0; in < inner; ++in) {
              const std::size_t i = (o * len + l) * inner + in;
              if (masked && !keep[i]) continue;
              g[i] += self.grad[o * inner + in] * weight[o * inner + in];
            }
          }
        }
      },
      op);
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis(x, axis, nullptr, false, "sum"); }

Tensor mean(const Tensor& x, std::size_t axis, const Mask* mask) {
  return reduce_axis(x, axis, mask, true, "mean");
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return finish(
      Shape{}, {acc}, {x},
      [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (double& v : g) v += self.grad[0];
      },
      "sum_all");
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw DegenerateInputError("mean_all of an empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor where(const Mask& keep, const Tensor& x, double fill) {
  check_mask(x, &keep, "where");
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep[i] ? xd[i] : fill;
  return finish(
      x.shape(), std::move(out), {x},
      [keep](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (keep[i]) g[i] += self.grad[i];
        }
      },
      "where");
}

Tensor masked_select(const Tensor& x, const Mask& mask) {
  check_mask(x, &mask, "masked_select");
  const auto xd = x.data();
  std::vector<std::size_t> src;
  std::vector<double> out;
  for (std::size_t i = 0; i < xd.size(); ++i) {
    if (mask[i]) {
      src.push_back(i);
      out.push_back(xd[i]);
    }
  }
  return finish(
      Shape{out.size()}, std::move(out), {x},
      [src = std::move(src)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
      },
      "masked_select");
}

Tensor take_last(const Tensor& x, const std::vector<std::size_t>& index) {
  if (x.rank() == 0) throw DimensionError("take_last on a scalar");
  const std::size_t last = x.shape().back();
  const std::size_t rows = last == 0 ? 0 : x.numel() / last;
  if (index.size() != rows) {
    throw DimensionError("take_last: " + std::to_string(index.size()) + " indices for " +
                         std::to_string(rows) + " rows of " + shape_str(x.shape()));
  }
  const auto xd = x.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= last) throw DimensionError("take_last: index out of range");
    out[r] = xd[r * last + index[r]];
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  return finish(
      std::move(out_shape), std::move(out), {x},
      [index, last](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (std::size_t r = 0; r < index.size(); ++r) g[r * last + index[r]] += self.grad[r];
      },
      "take_last");
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; }, "log");
}

Tensor sqrt(const Tensor& x) {
  return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; }, "sqrt");
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; }, "square");
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; },
      "relu");
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      },
      "gelu");
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); }, "softplus");
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(
      x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; }, "clamp_min");
}

}  // namespace mmtraj::ops
