#include "convdial/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "convdial/util/error.hpp"

namespace convdial {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

std::vector<double>& grad_of(const std::shared_ptr<detail::Node>& n) { return n->grad_buffer(); }

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {a}, [a, deriv](detail::Node& self) {
    auto& ga = grad_of(a.node());
    auto x = a.values();
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * deriv(x[i], self.value[i]);
  });
}

// Single-sample im2col: x [C, H, W] -> cols [C*kh*kw, Ho*Wo].
void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            const ConvGeometry& g, std::size_t ho, std::size_t wo, double* cols) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        double* row = cols + ((ci * kh + ki) * kw + kj) * p;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride_h + ki) - static_cast<long>(g.pad_h);
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride_w + kj) - static_cast<long>(g.pad_w);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<long>(h) && iw < static_cast<long>(w);
            row[oh * wo + ow] = inside ? x[(ci * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates cols back into x.
void col2im(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            const ConvGeometry& g, std::size_t ho, std::size_t wo, double* x) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const double* row = cols + ((ci * kh + ki) * kw + kj) * p;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride_h + ki) - static_cast<long>(g.pad_h);
          if (ih < 0 || ih >= static_cast<long>(h)) continue;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride_w + kj) - static_cast<long>(g.pad_w);
            if (iw < 0 || iw >= static_cast<long>(w)) continue;
            x[(ci * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)] += row[oh * wo + ow];
          }
        }
      }
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.values();
  auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](detail::Node& self) {
    for (const auto* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto& g = grad_of(t->node());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add_scaled(a, b, -1.0); }

Tensor add_scaled(const Tensor& a, const Tensor& b, double beta) {
  require_same_shape(a, b, "add_scaled");
  auto x = a.values();
  auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + beta * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b, beta](detail::Node& self) {
    if (a.requires_grad()) {
      auto& g = grad_of(a.node());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = grad_of(b.node());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += beta * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.values();
  auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](detail::Node& self) {
    auto xv = a.values();
    auto yv = b.values();
    if (a.requires_grad()) {
      auto& g = grad_of(a.node());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * yv[i];
    }
    if (b.requires_grad()) {
      auto& g = grad_of(b.node());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * xv[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result({1}, {total}, {a}, [a](detail::Node& self) {
    auto& g = grad_of(a.node());
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result({1}, {total / n}, {a}, [a, n](detail::Node& self) {
    auto& g = grad_of(a.node());
    for (auto& v : g) v += self.grad[0] / n;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [a](detail::Node& self) {
    auto& g = grad_of(a.node());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const auto& in_shape = a.shape();
  const std::size_t rank = in_shape.size();
  if (perm.size() != rank) throw ShapeError("permute: permutation rank mismatch");
  std::vector<bool> used(rank, false);
  for (auto p : perm) {
    if (p >= rank || used[p]) throw ShapeError("permute: invalid permutation");
    used[p] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];

  // source[flat_out] = flat_in
  std::vector<std::size_t> source(a.numel());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < source.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_strides[perm[i]];
    source[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto x = a.values();
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[source[i]];
  return make_result(std::move(out_shape), std::move(out), {a},
                     [a, source = std::move(source)](detail::Node& self) {
                       auto& g = grad_of(a.node());
                       for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += self.grad[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
      }
    }
    out_shape[axis] += s[axis];
    chunk.push_back(p.numel() / outer);
  }
  const std::size_t row = shape_numel(out_shape) / outer;
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + static_cast<long>(o * chunk[k]), chunk[k], out.begin() + static_cast<long>(o * row + offset));
    }
    offset += chunk[k];
  }
  return make_result(std::move(out_shape), std::move(out), parts, [parts, chunk, outer, row](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (parts[k].requires_grad()) {
        auto& g = grad_of(parts[k].node());
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < chunk[k]; ++j) g[o * chunk[k] + j] += self.grad[o * row + offset + j];
        }
      }
      offset += chunk[k];
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, const Shape& id_shape) {
  require_rank(table, 2, "embedding");
  if (id_shape.empty()) throw ShapeError("embedding: ids need at least one axis");
  if (shape_numel(id_shape) != ids.size()) throw ShapeError("embedding: id count does not match id shape");
  const std::size_t vocab = table.dim(0);
  const std::size_t e_dim = table.dim(1);
  const std::size_t len = id_shape.back();
  const std::size_t rows = ids.size() / len;
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  Shape out_shape(id_shape.begin(), id_shape.end() - 1);
  out_shape.push_back(e_dim);
  out_shape.push_back(len);
  auto tv = table.values();
  std::vector<double> out(rows * e_dim * len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = tv.data() + static_cast<std::size_t>(ids[r * len + l]) * e_dim;
      for (std::size_t e = 0; e < e_dim; ++e) out[(r * e_dim + e) * len + l] = src[e];
    }
  }
  std::vector<std::int32_t> id_copy(ids.begin(), ids.end());
  return make_result(std::move(out_shape), std::move(out), {table},
                     [table, id_copy = std::move(id_copy), rows, e_dim, len](detail::Node& self) {
                       auto& g = grad_of(table.node());
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t l = 0; l < len; ++l) {
                           double* dst = g.data() + static_cast<std::size_t>(id_copy[r * len + l]) * e_dim;
                           for (std::size_t e = 0; e < e_dim; ++e) dst[e] += self.grad[(r * e_dim + e) * len + l];
                         }
                       }
                     });
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("convolution stride must be positive");
  if (in + 2 * pad < kernel) {
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

std::size_t conv_transpose_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("convolution stride must be positive");
  const std::size_t full = (in - 1) * stride + kernel;
  if (full <= 2 * pad) throw ShapeError("transpose convolution padding consumes the whole output");
  return full - 2 * pad;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& geo,
              std::span<const double> mask) {
  require_rank(x, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) throw ShapeError("conv2d: bias shape mismatch");
  if (!mask.empty() && mask.size() != weight.numel()) throw ShapeError("conv2d: mask size mismatch");
  const std::size_t ho = conv_out_extent(h, kh, geo.stride_h, geo.pad_h);
  const std::size_t wo = conv_out_extent(w, kw, geo.stride_w, geo.pad_w);
  const std::size_t k = cin * kh * kw;
  const std::size_t p = ho * wo;

  std::vector<double> w_eff(weight.values().begin(), weight.values().end());
  if (!mask.empty()) {
    for (std::size_t i = 0; i < w_eff.size(); ++i) w_eff[i] *= mask[i];
  }
  std::vector<double> out(n * cout * p);
  std::vector<double> cols(k * p);
  MapC wm(w_eff.data(), static_cast<long>(cout), static_cast<long>(k));
  auto xv = x.values();
  for (std::size_t s = 0; s < n; ++s) {
    im2col(xv.data() + s * cin * h * w, cin, h, w, kh, kw, geo, ho, wo, cols.data());
    MapM om(out.data() + s * cout * p, static_cast<long>(cout), static_cast<long>(p));
    om.noalias() = wm * MapC(cols.data(), static_cast<long>(k), static_cast<long>(p));
    if (bias.defined()) {
      auto bv = bias.values();
      for (std::size_t c = 0; c < cout; ++c) om.row(static_cast<long>(c)).array() += bv[c];
    }
  }
  std::vector<double> mask_copy(mask.begin(), mask.end());
  return make_result(
      {n, cout, ho, wo}, std::move(out), {x, weight, bias},
      [x, weight, bias, geo, w_eff = std::move(w_eff), mask_copy = std::move(mask_copy), n, cin, h, w, cout, kh, kw,
       ho, wo, k, p](detail::Node& self) {
        std::vector<double> cols(k * p);
        std::vector<double> dcols(k * p);
        RowMat dw = RowMat::Zero(static_cast<long>(cout), static_cast<long>(k));
        MapC wm(w_eff.data(), static_cast<long>(cout), static_cast<long>(k));
        auto xv = x.values();
        for (std::size_t s = 0; s < n; ++s) {
          MapC dout(self.grad.data() + s * cout * p, static_cast<long>(cout), static_cast<long>(p));
          if (weight.requires_grad()) {
            im2col(xv.data() + s * cin * h * w, cin, h, w, kh, kw, geo, ho, wo, cols.data());
            dw.noalias() += dout * MapC(cols.data(), static_cast<long>(k), static_cast<long>(p)).transpose();
          }
          if (x.requires_grad()) {
            MapM dc(dcols.data(), static_cast<long>(k), static_cast<long>(p));
            dc.noalias() = wm.transpose() * dout;
            auto& gx = grad_of(x.node());
            col2im(dcols.data(), cin, h, w, kh, kw, geo, ho, wo, gx.data() + s * cin * h * w);
          }
          if (bias.defined() && bias.requires_grad()) {
            auto& gb = grad_of(bias.node());
            for (std::size_t c = 0; c < cout; ++c) gb[c] += dout.row(static_cast<long>(c)).sum();
          }
        }
        if (weight.requires_grad()) {
          auto& gw = grad_of(weight.node());
          for (std::size_t i = 0; i < gw.size(); ++i) {
            const double m = mask_copy.empty() ? 1.0 : mask_copy[i];
            gw[i] += m * dw.data()[i];
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& geo) {
  require_rank(x, 4, "conv_transpose2d input");
  require_rank(weight, 4, "conv_transpose2d weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != cin) {
    throw ShapeError("conv_transpose2d: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(0)));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) throw ShapeError("conv_transpose2d: bias shape mismatch");
  const std::size_t ho = conv_transpose_out_extent(h, kh, geo.stride_h, geo.pad_h);
  const std::size_t wo = conv_transpose_out_extent(w, kw, geo.stride_w, geo.pad_w);
  const std::size_t k = cout * kh * kw;
  const std::size_t p = h * w;
  const std::size_t out_plane = cout * ho * wo;

  std::vector<double> out(n * out_plane, 0.0);
  std::vector<double> cols(k * p);
  MapC wm(weight.values().data(), static_cast<long>(cin), static_cast<long>(k));
  auto xv = x.values();
  for (std::size_t s = 0; s < n; ++s) {
    MapM cm(cols.data(), static_cast<long>(k), static_cast<long>(p));
    cm.noalias() = wm.transpose() * MapC(xv.data() + s * cin * p, static_cast<long>(cin), static_cast<long>(p));
    col2im(cols.data(), cout, ho, wo, kh, kw, geo, h, w, out.data() + s * out_plane);
    if (bias.defined()) {
      auto bv = bias.values();
      for (std::size_t c = 0; c < cout; ++c) {
        double* plane = out.data() + s * out_plane + c * ho * wo;
        for (std::size_t i = 0; i < ho * wo; ++i) plane[i] += bv[c];
      }
    }
  }
  return make_result({n, cout, ho, wo}, std::move(out), {x, weight, bias},
                     [x, weight, bias, geo, n, cin, h, w, cout, kh, kw, ho, wo, k, p, out_plane](detail::Node& self) {
                       std::vector<double> dcols(k * p);
                       RowMat dw = RowMat::Zero(static_cast<long>(cin), static_cast<long>(k));
                       MapC wm(weight.values().data(), static_cast<long>(cin), static_cast<long>(k));
                       auto xv = x.values();
                       for (std::size_t s = 0; s < n; ++s) {
                         im2col(self.grad.data() + s * out_plane, cout, ho, wo, kh, kw, geo, h, w, dcols.data());
                         MapC dc(dcols.data(), static_cast<long>(k), static_cast<long>(p));
                         if (x.requires_grad()) {
                           auto& gx = grad_of(x.node());
                           MapM gxm(gx.data() + s * cin * p, static_cast<long>(cin), static_cast<long>(p));
                           gxm.noalias() += wm * dc;
                         }
                         if (weight.requires_grad()) {
                           dw.noalias() += MapC(xv.data() + s * cin * p, static_cast<long>(cin), static_cast<long>(p)) *
                                           dc.transpose();
                         }
                         if (bias.defined() && bias.requires_grad()) {
                           auto& gb = grad_of(bias.node());
                           for (std::size_t c = 0; c < cout; ++c) {
                             const double* plane = self.grad.data() + s * out_plane + c * ho * wo;
                             double acc = 0.0;
                             for (std::size_t i = 0; i < ho * wo; ++i) acc += plane[i];
                             gb[c] += acc;
                           }
                         }
                       }
                       if (weight.requires_grad()) {
                         auto& gw = grad_of(weight.node());
                         for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw.data()[i];
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: input width " + std::to_string(in) + " vs weight " + shape_str(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) throw ShapeError("linear: bias shape mismatch");
  std::vector<double> out(rows * out_dim);
  MapM om(out.data(), static_cast<long>(rows), static_cast<long>(out_dim));
  MapC xm(x.values().data(), static_cast<long>(rows), static_cast<long>(in));
  MapC wm(weight.values().data(), static_cast<long>(out_dim), static_cast<long>(in));
  om.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    Eigen::Map<const Eigen::RowVectorXd> bv(bias.values().data(), static_cast<long>(out_dim));
    om.rowwise() += bv;
  }
  return make_result({rows, out_dim}, std::move(out), {x, weight, bias},
                     [x, weight, bias, rows, in, out_dim](detail::Node& self) {
                       MapC dout(self.grad.data(), static_cast<long>(rows), static_cast<long>(out_dim));
                       if (x.requires_grad()) {
                         auto& gx = grad_of(x.node());
                         MapM(gx.data(), static_cast<long>(rows), static_cast<long>(in)).noalias() +=
                             dout * MapC(weight.values().data(), static_cast<long>(out_dim), static_cast<long>(in));
                       }
                       if (weight.requires_grad()) {
                         auto& gw = grad_of(weight.node());
                         MapM(gw.data(), static_cast<long>(out_dim), static_cast<long>(in)).noalias() +=
                             dout.transpose() * MapC(x.values().data(), static_cast<long>(rows), static_cast<long>(in));
                       }
                       if (bias.defined() && bias.requires_grad()) {
                         auto& gb = grad_of(bias.node());
                         Eigen::Map<Eigen::RowVectorXd>(gb.data(), static_cast<long>(out_dim)) += dout.colwise().sum();
                       }
                     });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormBuffers& buffers,
                    bool training, double momentum, double eps) {
  require_rank(x, 4, "batch_norm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || buffers.running_mean.shape() != Shape{c} ||
      buffers.running_var.shape() != Shape{c}) {
    throw ShapeError("batch_norm2d: parameters must have channel extent " + std::to_string(c));
  }
  if (!training && !buffers.initialized) {
    throw StateError("batch_norm2d: eval mode requires initialized running statistics");
  }
  const std::size_t count = n * hw;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> mean_c(c), inv_std(c);
  if (training) {
    auto rm = buffers.running_mean.mutable_values();
    auto rv = buffers.running_var.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* plane = xv.data() + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) m += plane[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const double* plane = xv.data() + (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) v += (plane[i] - m) * (plane[i] - m);
      }
      const double biased = v / static_cast<double>(count);
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : biased;
      mean_c[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(biased + eps);
      rm[ch] = (1.0 - momentum) * rm[ch] + momentum * m;
      rv[ch] = (1.0 - momentum) * rv[ch] + momentum * unbiased;
    }
    buffers.initialized = true;
  } else {
    auto rm = buffers.running_mean.values();
    auto rv = buffers.running_var.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean_c[ch] = rm[ch];
      inv_std[ch] = 1.0 / std::sqrt(rv[ch] + eps);
    }
  }
  std::vector<double> xhat(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[base + i] = (xv[base + i] - mean_c[ch]) * inv_std[ch];
        out[base + i] = gv[ch] * xhat[base + i] + bv[ch];
      }
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, training, xhat = std::move(xhat), inv_std, n, c, hw, count](detail::Node& self) {
                       const auto& dy = self.grad;
                       auto gv = gamma.values();
                       std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
                       for (std::size_t s = 0; s < n; ++s) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           const std::size_t base = (s * c + ch) * hw;
                           for (std::size_t i = 0; i < hw; ++i) {
                             sum_dy[ch] += dy[base + i];
                             sum_dy_xhat[ch] += dy[base + i] * xhat[base + i];
                           }
                         }
                       }
                       if (gamma.requires_grad()) {
                         auto& gg = grad_of(gamma.node());
                         for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xhat[ch];
                       }
                       if (beta.requires_grad()) {
                         auto& gb = grad_of(beta.node());
                         for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
                       }
                       if (!x.requires_grad()) return;
                       auto& gx = grad_of(x.node());
                       const double cnt = static_cast<double>(count);
                       for (std::size_t s = 0; s < n; ++s) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           const std::size_t base = (s * c + ch) * hw;
                           const double g = gv[ch] * inv_std[ch];
                           for (std::size_t i = 0; i < hw; ++i) {
                             if (training) {
                               gx[base + i] += g * (dy[base + i] - sum_dy[ch] / cnt -
                                                    xhat[base + i] * sum_dy_xhat[ch] / cnt);
                             } else {
                               gx[base + i] += g * dy[base + i];
                             }
                           }
                         }
                       }
                     });
}

std::vector<double> log_softmax_rows(std::span<const double> logits, std::size_t vocab) {
  std::vector<double> out(logits.size());
  const std::size_t rows = logits.size() / vocab;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = logits.data() + r * vocab;
    double mx = in[0];
    for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, in[v]);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(in[v] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t v = 0; v < vocab; ++v) out[r * vocab + v] = in[v] - lse;
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                             std::span<const double> weights) {
  if (logits.rank() < 2) throw ShapeError("softmax_cross_entropy: logits need a batch and a vocabulary axis");
  const std::size_t n = logits.dim(0);
  const std::size_t vocab = logits.shape().back();
  const std::size_t positions = logits.numel() / (n * vocab);
  if (targets.size() != n * positions) {
    throw ShapeError("softmax_cross_entropy: expected " + std::to_string(n * positions) + " targets, got " +
                     std::to_string(targets.size()));
  }
  if (!weights.empty() && weights.size() != targets.size()) throw ShapeError("softmax_cross_entropy: weight count");
  for (auto t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) throw InvalidArgument("target id outside vocabulary");
  }
  std::vector<double> logp = log_softmax_rows(logits.values(), vocab);
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::size_t p = 0; p < positions; ++p) {
      const std::size_t row = s * positions + p;
      const double w = weights.empty() ? 1.0 : weights[row];
      acc -= w * logp[row * vocab + static_cast<std::size_t>(targets[row])];
    }
    out[s] = acc;
  }
  std::vector<std::int32_t> tcopy(targets.begin(), targets.end());
  std::vector<double> wcopy(weights.begin(), weights.end());
  return make_result({n}, std::move(out), {logits},
                     [logits, logp = std::move(logp), tcopy = std::move(tcopy), wcopy = std::move(wcopy), n, positions,
                      vocab](detail::Node& self) {
                       auto& g = grad_of(logits.node());
                       for (std::size_t s = 0; s < n; ++s) {
                         for (std::size_t p = 0; p < positions; ++p) {
                           const std::size_t row = s * positions + p;
                           const double w = (wcopy.empty() ? 1.0 : wcopy[row]) * self.grad[s];
                           if (w == 0.0) continue;
                           double* gr = g.data() + row * vocab;
                           const double* lp = logp.data() + row * vocab;
                           for (std::size_t v = 0; v < vocab; ++v) gr[v] += w * std::exp(lp[v]);
                           gr[static_cast<std::size_t>(tcopy[row])] -= w;
                         }
                       }
                     });
}

Tensor kl_diag_gaussian(const Tensor& mu_q, const Tensor& logvar_q, const Tensor& mu_p, const Tensor& logvar_p) {
  require_rank(mu_q, 2, "kl_diag_gaussian");
  require_same_shape(mu_q, logvar_q, "kl_diag_gaussian");
  require_same_shape(mu_q, mu_p, "kl_diag_gaussian");
  require_same_shape(mu_q, logvar_p, "kl_diag_gaussian");
  const std::size_t n = mu_q.dim(0), z = mu_q.dim(1);
  auto mq = mu_q.values(), lq = logvar_q.values(), mp = mu_p.values(), lp = logvar_p.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::size_t d = 0; d < z; ++d) {
      const std::size_t i = s * z + d;
      const double diff = mq[i] - mp[i];
      const double x = lq[i] - lp[i];
      // expm1(x) - x >= 0 keeps each term nonnegative under rounding.
      acc += std::max(0.0, (std::expm1(x) - x) + diff * diff * std::exp(-lp[i]));
    }
    out[s] = 0.5 * acc;
  }
  return make_result({n}, std::move(out), {mu_q, logvar_q, mu_p, logvar_p},
                     [mu_q, logvar_q, mu_p, logvar_p, n, z](detail::Node& self) {
                       auto mq = mu_q.values(), lq = logvar_q.values(), mp = mu_p.values(), lp = logvar_p.values();
                       for (std::size_t s = 0; s < n; ++s) {
                         const double go = self.grad[s];
                         for (std::size_t d = 0; d < z; ++d) {
                           const std::size_t i = s * z + d;
                           const double diff = mq[i] - mp[i];
                           const double inv_vp = std::exp(-lp[i]);
                           const double ratio = std::exp(lq[i] - lp[i]);
                           if (mu_q.requires_grad()) grad_of(mu_q.node())[i] += go * diff * inv_vp;
                           if (mu_p.requires_grad()) grad_of(mu_p.node())[i] -= go * diff * inv_vp;
                           if (logvar_q.requires_grad()) grad_of(logvar_q.node())[i] += go * 0.5 * (ratio - 1.0);
                           if (logvar_p.requires_grad()) {
                             grad_of(logvar_p.node())[i] += go * 0.5 * (1.0 - ratio - diff * diff * inv_vp);
                           }
                         }
                       }
                     });
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps) {
  require_same_shape(mu, logvar, "reparameterize");
  require_same_shape(mu, eps, "reparameterize");
  auto m = mu.values(), lv = logvar.values(), e = eps.values();
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m[i] + e[i] * std::exp(0.5 * lv[i]);
  return make_result(mu.shape(), std::move(out), {mu, logvar}, [mu, logvar, eps](detail::Node& self) {
    auto lv = logvar.values(), e = eps.values();
    if (mu.requires_grad()) {
      auto& g = grad_of(mu.node());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (logvar.requires_grad()) {
      auto& g = grad_of(logvar.node());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * e[i] * 0.5 * std::exp(0.5 * lv[i]);
    }
  });
}

}  // namespace convdial
