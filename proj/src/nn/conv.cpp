#include <algorithm>
#include <string>

#include "pseg/error.hpp"
#include "pseg/nn/ops.hpp"

namespace pseg::nn {
namespace {

/// Output indices o in [lo, hi) with 0 <= o * stride + offset < in_extent.
struct Range {
  int lo;
  int hi;
};

Range valid_range(int offset, int stride, int in_extent, int out_extent) {
  const int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  const int last = in_extent - 1 - offset;
  const int hi = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

struct Geometry {
  int stride;
  int dilation;
  int padding;
};

// The three kernels below share one index map: the conv-space tensor `in`
// (channels = weights.c) and the output-space tensor `out` (channels =
// weights.n) are related by out[oy, ox] ~ in[oy*s - p + ky*d, ox*s - p + kx*d].

// out += W * in
void correlate(const Tensor4& in, const Tensor4& weights, const Geometry& g, Tensor4& out) {
  const auto& ws = weights.shape();
  const int ih = in.shape().h;
  const int iw = in.shape().w;
  const int oh = out.shape().h;
  const int ow = out.shape().w;
  for (int n = 0; n < in.shape().n; ++n) {
    for (int oc = 0; oc < ws.n; ++oc) {
      double* dst = out.plane(n, oc);
      for (int ic = 0; ic < ws.c; ++ic) {
        const double* src = in.plane(n, ic);
        for (int ky = 0; ky < ws.h; ++ky) {
          const Range ry = valid_range(ky * g.dilation - g.padding, g.stride, ih, oh);
          for (int kx = 0; kx < ws.w; ++kx) {
            const double wv = weights(oc, ic, ky, kx);
            if (wv == 0.0) continue;
            const int xoff = kx * g.dilation - g.padding;
            const Range rx = valid_range(xoff, g.stride, iw, ow);
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const int iy = oy * g.stride + ky * g.dilation - g.padding;
              const double* srow = src + static_cast<std::size_t>(iy) * iw + xoff;
              double* drow = dst + static_cast<std::size_t>(oy) * ow;
              if (g.stride == 1) {
                for (int ox = rx.lo; ox < rx.hi; ++ox) drow[ox] += wv * srow[ox];
              } else {
                for (int ox = rx.lo; ox < rx.hi; ++ox) drow[ox] += wv * srow[ox * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

// in += W^T * out   (adjoint of correlate with respect to `in`)
void scatter(const Tensor4& out, const Tensor4& weights, const Geometry& g, Tensor4& in) {
  const auto& ws = weights.shape();
  const int ih = in.shape().h;
  const int iw = in.shape().w;
  const int oh = out.shape().h;
  const int ow = out.shape().w;
  for (int n = 0; n < out.shape().n; ++n) {
    for (int ic = 0; ic < ws.c; ++ic) {
      double* dst = in.plane(n, ic);
      for (int oc = 0; oc < ws.n; ++oc) {
        const double* src = out.plane(n, oc);
        for (int ky = 0; ky < ws.h; ++ky) {
          const Range ry = valid_range(ky * g.dilation - g.padding, g.stride, ih, oh);
          for (int kx = 0; kx < ws.w; ++kx) {
            const double wv = weights(oc, ic, ky, kx);
            if (wv == 0.0) continue;
            const int xoff = kx * g.dilation - g.padding;
            const Range rx = valid_range(xoff, g.stride, iw, ow);
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const int iy = oy * g.stride + ky * g.dilation - g.padding;
              double* drow = dst + static_cast<std::size_t>(iy) * iw + xoff;
              const double* srow = src + static_cast<std::size_t>(oy) * ow;
              if (g.stride == 1) {
                for (int ox = rx.lo; ox < rx.hi; ++ox) drow[ox] += wv * srow[ox];
              } else {
                for (int ox = rx.lo; ox < rx.hi; ++ox) drow[ox * g.stride] += wv * srow[ox];
              }
            }
          }
        }
      }
    }
  }
}

// gw += d<out, W * in>/dW
void weight_gradient(const Tensor4& in, const Tensor4& out, const Geometry& g, Tensor4& gw) {
  const auto& ws = gw.shape();
  const int ih = in.shape().h;
  const int iw = in.shape().w;
  const int oh = out.shape().h;
  const int ow = out.shape().w;
  for (int n = 0; n < in.shape().n; ++n) {
    for (int oc = 0; oc < ws.n; ++oc) {
      const double* go = out.plane(n, oc);
      for (int ic = 0; ic < ws.c; ++ic) {
        const double* src = in.plane(n, ic);
        for (int ky = 0; ky < ws.h; ++ky) {
          const Range ry = valid_range(ky * g.dilation - g.padding, g.stride, ih, oh);
          for (int kx = 0; kx < ws.w; ++kx) {
            const int xoff = kx * g.dilation - g.padding;
            const Range rx = valid_range(xoff, g.stride, iw, ow);
            double acc = 0.0;
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const int iy = oy * g.stride + ky * g.dilation - g.padding;
              const double* srow = src + static_cast<std::size_t>(iy) * iw + xoff;
              const double* grow = go + static_cast<std::size_t>(oy) * ow;
              for (int ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * srow[ox * g.stride];
            }
            gw(oc, ic, ky, kx) += acc;
          }
        }
      }
    }
  }
}

void check_geometry(const ConvParams& p) {
  if (p.stride < 1) throw ValidationError("conv: stride must be >= 1");
  if (p.dilation < 1) throw ValidationError("conv: dilation must be >= 1");
  if (p.padding < 0) throw ValidationError("conv: padding must be >= 0");
  if (p.weights.shape().h < 1 || p.weights.shape().w < 1) throw ValidationError("conv: empty kernel");
}

void add_bias(Tensor4& out, const std::vector<double>& bias) {
  if (bias.empty()) return;
  if (static_cast<int>(bias.size()) != out.shape().c) {
    throw ValidationError("conv: bias has " + std::to_string(bias.size()) + " entries for " +
                          std::to_string(out.shape().c) + " output channels");
  }
  for (int n = 0; n < out.shape().n; ++n) {
    for (int c = 0; c < out.shape().c; ++c) {
      double* d = out.plane(n, c);
      std::fill(d, d + out.shape().plane(), bias[static_cast<std::size_t>(c)]);
    }
  }
}

std::vector<double> bias_gradient(const Tensor4& grad_out) {
  std::vector<double> gb(static_cast<std::size_t>(grad_out.shape().c), 0.0);
  for (int n = 0; n < grad_out.shape().n; ++n) {
    for (int c = 0; c < grad_out.shape().c; ++c) {
      const double* g = grad_out.plane(n, c);
      double s = 0.0;
      for (std::size_t i = 0; i < grad_out.shape().plane(); ++i) s += g[i];
      gb[static_cast<std::size_t>(c)] += s;
    }
  }
  return gb;
}

Geometry geometry(const ConvParams& p) { return {p.stride, p.dilation, p.padding}; }

}  // namespace

int conv_output_extent(int in, int k, int stride, int dilation, int padding) {
  const int span = in + 2 * padding - ((k - 1) * dilation + 1);
  if (span < 0) return 0;
  return span / stride + 1;
}

int transposed_output_extent(int in, int k, int stride, int dilation, int padding) {
  return (in - 1) * stride + (k - 1) * dilation + 1 - 2 * padding;
}

ConvParams make_conv(int in_c, int out_c, int k, int stride, int dilation, bool with_bias) {
  ConvParams p;
  p.weights = Tensor4({out_c, in_c, k, k});
  if (with_bias) p.bias.assign(static_cast<std::size_t>(out_c), 0.0);
  p.stride = stride;
  p.dilation = dilation;
  p.padding = ((k - 1) * dilation) / 2;
  return p;
}

Tensor4 conv2d(const Tensor4& x, const ConvParams& p) {
  check_geometry(p);
  const auto& xs = x.shape();
  if (xs.c != p.in_channels()) {
    throw ValidationError("conv2d: input has " + std::to_string(xs.c) + " channels, weights expect " +
                          std::to_string(p.in_channels()));
  }
  const int oh = conv_output_extent(xs.h, p.kernel_h(), p.stride, p.dilation, p.padding);
  const int ow = conv_output_extent(xs.w, p.kernel_w(), p.stride, p.dilation, p.padding);
  if (oh < 1 || ow < 1) throw ValidationError("conv2d: non-positive output size for input " + xs.str());
  Tensor4 out({xs.n, p.out_channels(), oh, ow});
  add_bias(out, p.bias);
  correlate(x, p.weights, geometry(p), out);
  return out;
}

ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out) {
  check_geometry(p);
  const auto& xs = x.shape();
  const Shape4 expected{xs.n, p.out_channels(), conv_output_extent(xs.h, p.kernel_h(), p.stride, p.dilation, p.padding),
                        conv_output_extent(xs.w, p.kernel_w(), p.stride, p.dilation, p.padding)};
  if (xs.c != p.in_channels() || grad_out.shape() != expected) {
    throw ValidationError("conv2d_backward: shape mismatch, grad_out " + grad_out.shape().str() + " expected " +
                          expected.str());
  }
  ConvGrads g;
  g.grad_x = Tensor4(xs);
  g.grad_w = Tensor4(p.weights.shape());
  scatter(grad_out, p.weights, geometry(p), g.grad_x);
  weight_gradient(x, grad_out, geometry(p), g.grad_w);
  if (!p.bias.empty()) g.grad_b = bias_gradient(grad_out);
  return g;
}

Tensor4 transposed_conv2d(const Tensor4& x, const ConvParams& p) {
  check_geometry(p);
  const auto& xs = x.shape();
  if (xs.c != p.out_channels()) {
    throw ValidationError("transposed_conv2d: input has " + std::to_string(xs.c) + " channels, weights expect " +
                          std::to_string(p.out_channels()));
  }
  const int oh = transposed_output_extent(xs.h, p.kernel_h(), p.stride, p.dilation, p.padding);
  const int ow = transposed_output_extent(xs.w, p.kernel_w(), p.stride, p.dilation, p.padding);
  if (oh < 1 || ow < 1) throw ValidationError("transposed_conv2d: non-positive output size for input " + xs.str());
  Tensor4 out({xs.n, p.in_channels(), oh, ow});
  add_bias(out, p.bias);
  scatter(x, p.weights, geometry(p), out);
  return out;
}

ConvGrads transposed_conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out) {
  check_geometry(p);
  const auto& xs = x.shape();
  const Shape4 expected{xs.n, p.in_channels(),
                        transposed_output_extent(xs.h, p.kernel_h(), p.stride, p.dilation, p.padding),
                        transposed_output_extent(xs.w, p.kernel_w(), p.stride, p.dilation, p.padding)};
  if (xs.c != p.out_channels() || grad_out.shape() != expected) {
    throw ValidationError("transposed_conv2d_backward: shape mismatch, grad_out " + grad_out.shape().str() +
                          " expected " + expected.str());
  }
  ConvGrads g;
  g.grad_x = Tensor4(xs);
  g.grad_w = Tensor4(p.weights.shape());
  correlate(grad_out, p.weights, geometry(p), g.grad_x);
  weight_gradient(grad_out, x, geometry(p), g.grad_w);
  if (!p.bias.empty()) g.grad_b = bias_gradient(grad_out);
  return g;
}

}  // namespace pseg::nn
