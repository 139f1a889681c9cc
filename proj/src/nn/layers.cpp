#include <algorithm>
#include <cmath>
#include <string>

#include "pseg/error.hpp"
#include "pseg/nn/ops.hpp"

namespace pseg::nn {

MaxPoolResult maxpool2(const Tensor4& x) {
  const auto& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ValidationError("maxpool2: odd spatial dims in " + s.str());
  MaxPoolResult r;
  r.input_shape = s;
  r.output = Tensor4({s.n, s.c, s.h / 2, s.w / 2});
  r.argmax.resize(r.output.size());
  const auto& in = x.values();
  std::size_t k = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < s.h / 2; ++oy) {
        for (int ox = 0; ox < s.w / 2; ++ox, ++k) {
          std::size_t best = x.offset(n, c, 2 * oy, 2 * ox);
          // Window order: (0,0), (0,1), (1,0), (1,1); strict > keeps the first max.
          const std::size_t candidates[3] = {best + 1, x.offset(n, c, 2 * oy + 1, 2 * ox),
                                             x.offset(n, c, 2 * oy + 1, 2 * ox + 1)};
          for (std::size_t cand : candidates) {
            if (in[cand] > in[best]) best = cand;
          }
          r.output.values()[k] = in[best];
          r.argmax[k] = best;
        }
      }
    }
  }
  return r;
}

Tensor4 maxpool2_backward(const MaxPoolResult& pooled, const Tensor4& grad_out) {
  if (grad_out.shape() != pooled.output.shape()) {
    throw ValidationError("maxpool2_backward: grad shape " + grad_out.shape().str() + " expected " +
                          pooled.output.shape().str());
  }
  Tensor4 gx(pooled.input_shape);
  for (std::size_t k = 0; k < pooled.argmax.size(); ++k) gx.values()[pooled.argmax[k]] += grad_out.values()[k];
  return gx;
}

Tensor4 relu(const Tensor4& x) {
  Tensor4 y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
  if (x.shape() != grad_out.shape()) throw ValidationError("relu_backward: shape mismatch");
  Tensor4 g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x.values()[i] > 0.0)) g.values()[i] = 0.0;
  }
  return g;
}

std::vector<double> bilinear_weights_1d(int factor) {
  if (factor < 1) throw ValidationError("bilinear_kernel: factor must be >= 1");
  const int size = 2 * factor - factor % 2;
  const double center = (size - 1) / 2.0;
  std::vector<double> w(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) w[static_cast<std::size_t>(i)] = 1.0 - std::abs(i - center) / factor;
  return w;
}

ConvParams bilinear_kernel(int factor, int channels) {
  if (channels < 1) throw ValidationError("bilinear_kernel: channels must be >= 1");
  const auto w1 = bilinear_weights_1d(factor);
  const int size = static_cast<int>(w1.size());
  ConvParams p;
  p.weights = Tensor4({channels, channels, size, size});
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) p.weights(c, c, i, j) = w1[static_cast<std::size_t>(i)] * w1[static_cast<std::size_t>(j)];
    }
  }
  p.stride = factor;
  p.dilation = 1;
  p.padding = (size - factor) / 2;
  return p;
}

Tensor4 softmax(const Tensor4& logits) {
  const auto& s = logits.shape();
  Tensor4 prob(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = logits.plane(n, 0)[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, logits.plane(n, c)[i]);
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double e = std::exp(logits.plane(n, c)[i] - mx);
        prob.plane(n, c)[i] = e;
        z += e;
      }
      for (int c = 0; c < s.c; ++c) prob.plane(n, c)[i] /= z;
    }
  }
  return prob;
}

LossOutput softmax_cross_entropy(const Tensor4& logits, std::span<const std::uint8_t> labels) {
  const auto& s = logits.shape();
  const std::size_t plane = s.plane();
  if (labels.size() != static_cast<std::size_t>(s.n) * plane) {
    throw ValidationError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + s.str());
  }
  if (s.c < 1 || labels.empty()) throw ValidationError("softmax_cross_entropy: empty logits");
  const double count = static_cast<double>(labels.size());
  LossOutput out;
  out.grad_logits = Tensor4(s);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int label = labels[static_cast<std::size_t>(n) * plane + i];
      if (label >= s.c) {
        throw ValidationError("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                              std::to_string(s.c) + " classes");
      }
      double mx = logits.plane(n, 0)[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, logits.plane(n, c)[i]);
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) z += std::exp(logits.plane(n, c)[i] - mx);
      const double log_z = std::log(z);
      total += log_z - (logits.plane(n, label)[i] - mx);
      for (int c = 0; c < s.c; ++c) {
        const double p = std::exp(logits.plane(n, c)[i] - mx - log_z);
        out.grad_logits.plane(n, c)[i] = (p - (c == label ? 1.0 : 0.0)) / count;
      }
    }
  }
  out.loss = total / count;
  return out;
}

LossOutput softmax_cross_entropy(const Tensor4& logits, const BinaryMask2D& labels) {
  const auto& s = logits.shape();
  if (s.n != 1 || s.h != labels.height() || s.w != labels.width()) {
    throw ValidationError("softmax_cross_entropy: logits " + s.str() + " do not match a " +
                          std::to_string(labels.width()) + "x" + std::to_string(labels.height()) + " mask");
  }
  return softmax_cross_entropy(logits, std::span<const std::uint8_t>(labels.labels()));
}

BinaryMask2D argmax_mask(const Tensor4& logits) {
  const auto& s = logits.shape();
  if (s.n != 1 || s.c < 2) throw ValidationError("argmax_mask: expected (1, C>=2, H, W) logits, got " + s.str());
  std::vector<std::uint8_t> labels(s.plane());
  for (std::size_t i = 0; i < s.plane(); ++i) {
    int best = 0;
    for (int c = 1; c < s.c; ++c) {
      if (logits.plane(0, c)[i] > logits.plane(0, best)[i]) best = c;
    }
    labels[i] = best == 0 ? 0 : 1;
  }
  return BinaryMask2D(s.w, s.h, std::move(labels));
}

Tensor4 image_to_tensor(const ScalarImage2D& img) {
  return Tensor4({1, 1, img.height(), img.width()}, img.values());
}

}  // namespace pseg::nn
