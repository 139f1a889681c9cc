#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pseg/imaging.hpp"
#include "pseg/nn/tensor.hpp"

namespace pseg::nn {

/// Convolution weights (out_c, in_c, kh, kw) plus geometry. The effective
/// kernel extent along an axis is (k - 1) * dilation + 1.
struct ConvParams {
  Tensor4 weights;
  std::vector<double> bias;  // one per output channel, or empty for none
  int stride = 1;
  int dilation = 1;
  int padding = 0;

  int out_channels() const { return weights.shape().n; }
  int in_channels() const { return weights.shape().c; }
  int kernel_h() const { return weights.shape().h; }
  int kernel_w() const { return weights.shape().w; }
};

/// Zero-initialized convolution with "same" padding for odd kernels:
/// padding = ((k - 1) * dilation) / 2.
ConvParams make_conv(int in_c, int out_c, int k, int stride = 1, int dilation = 1, bool with_bias = true);

/// Spatial output extent of conv2d along one axis.
int conv_output_extent(int in, int k, int stride, int dilation, int padding);
/// Spatial output extent of transposed_conv2d along one axis.
int transposed_output_extent(int in, int k, int stride, int dilation, int padding);

struct ConvGrads {
  Tensor4 grad_x;
  Tensor4 grad_w;
  std::vector<double> grad_b;
};

/// Cross-correlation (no kernel flip) with zero padding and dilated taps.
Tensor4 conv2d(const Tensor4& x, const ConvParams& p);
ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out);

/// Adjoint of conv2d's input map: maps weights.n channels to weights.c
/// channels, each input value writing a scaled kernel copy into the output.
/// Bias (if present) has weights.c entries.
Tensor4 transposed_conv2d(const Tensor4& x, const ConvParams& p);
ConvGrads transposed_conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out);

struct MaxPoolResult {
  Tensor4 output;
  std::vector<std::size_t> argmax;  // flat input offset per output element
  Shape4 input_shape;
};

/// 2x2 window, stride 2. Ties go to the first element in row-major window order.
MaxPoolResult maxpool2(const Tensor4& x);
Tensor4 maxpool2_backward(const MaxPoolResult& pooled, const Tensor4& grad_out);

Tensor4 relu(const Tensor4& x);
/// Passes grad where x > 0; the subgradient at 0 is 0.
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);

/// Fixed bilinear upsampling filter for transposed_conv2d: kernel size
/// 2f - (f mod 2), stride f, padding (k - f) / 2, channel-diagonal weights.
ConvParams bilinear_kernel(int factor, int channels);
/// 1-D taps w[i] = 1 - |i - c| / f with c = (k - 1) / 2.
std::vector<double> bilinear_weights_1d(int factor);

struct LossOutput {
  double loss = 0.0;
  Tensor4 grad_logits;
};

/// Per-pixel softmax over the channel axis.
Tensor4 softmax(const Tensor4& logits);

/// Mean per-pixel cross entropy. `labels` holds n*h*w class ids in NHW order.
LossOutput softmax_cross_entropy(const Tensor4& logits, std::span<const std::uint8_t> labels);
LossOutput softmax_cross_entropy(const Tensor4& logits, const BinaryMask2D& labels);

/// Per-pixel argmax over channels of a single-image binary logit map.
BinaryMask2D argmax_mask(const Tensor4& logits);

/// (1, 1, h, w) tensor from an image.
Tensor4 image_to_tensor(const ScalarImage2D& img);

}  // namespace pseg::nn
