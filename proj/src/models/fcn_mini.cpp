#include "pseg/error.hpp"
#include "pseg/models.hpp"

namespace pseg::models {
namespace {

void accumulate(Gradients& g, int idx, const nn::ConvGrads& cg) {
  g.weight[static_cast<std::size_t>(idx)] += cg.grad_w;
  auto& b = g.bias[static_cast<std::size_t>(idx)];
  for (std::size_t i = 0; i < cg.grad_b.size(); ++i) b[i] += cg.grad_b[i];
}

}  // namespace

void FcnMiniConfig::validate() const {
  if (input_size < 32 || input_size % 32 != 0) {
    throw ValidationError("fcn: input_size must be a positive multiple of 32, got " + std::to_string(input_size));
  }
  if (base_channels < 1) throw ValidationError("fcn: base_channels must be >= 1");
  if (num_classes < 2) throw ValidationError("fcn: num_classes must be >= 2");
}

FcnMini::FcnMini(const FcnMiniConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  const int b = cfg.base_channels;
  const std::array<int, 5> widths{b, 2 * b, 4 * b, 8 * b, 8 * b};
  int in_c = 1;
  for (int s = 0; s < 5; ++s) {
    for (int j = 0; j < 2; ++j) {
      const std::string name = "fcn.conv" + std::to_string(s + 1) + "_" + std::to_string(j + 1);
      conv_[s][j] = add_layer(name, nn::make_conv(in_c, widths[s], 3));
      in_c = widths[s];
    }
  }
  score32_ = add_layer("fcn.score_pool5", nn::make_conv(widths[4], cfg.num_classes, 1));
  score16_ = add_layer("fcn.score_pool4", nn::make_conv(widths[3], cfg.num_classes, 1));
  score8_ = add_layer("fcn.score_pool3", nn::make_conv(widths[2], cfg.num_classes, 1));
  initialize(seed, {"fcn.score_pool5", "fcn.score_pool4", "fcn.score_pool3"});
  up2_ = nn::bilinear_kernel(2, cfg.num_classes);
  up8_ = nn::bilinear_kernel(8, cfg.num_classes);
}

nn::Tensor4 FcnMini::forward(const nn::Tensor4& x, std::unique_ptr<ForwardCache>* cache) const {
  const auto& s = x.shape();
  if (s.c != 1 || s.h % 32 != 0 || s.w % 32 != 0 || s.h < 32 || s.w < 32) {
    throw ValidationError("fcn: input must be (n, 1, 32k, 32k), got " + s.str());
  }
  auto c = std::make_unique<Cache>();
  c->input = x;
  nn::Tensor4 h = x;
  for (int st = 0; st < 5; ++st) {
    for (int j = 0; j < 2; ++j) {
      c->conv_in[st][j] = h;
      c->conv_out[st][j] = nn::conv2d(h, layers_[static_cast<std::size_t>(conv_[st][j])].params);
      h = nn::relu(c->conv_out[st][j]);
    }
    c->pool[st] = nn::maxpool2(h);
    h = c->pool[st].output;
  }
  c->score32 = nn::conv2d(c->pool[4].output, layers_[static_cast<std::size_t>(score32_)].params);
  c->score16 = nn::conv2d(c->pool[3].output, layers_[static_cast<std::size_t>(score16_)].params);
  c->score8 = nn::conv2d(c->pool[2].output, layers_[static_cast<std::size_t>(score8_)].params);

  c->fuse16 = nn::transposed_conv2d(c->score32, up2_);
  c->fuse16 += c->score16;
  c->fuse8 = nn::transposed_conv2d(c->fuse16, up2_);
  c->fuse8 += c->score8;
  nn::Tensor4 logits = nn::transposed_conv2d(c->fuse8, up8_);
  if (cache) *cache = std::move(c);
  return logits;
}

nn::Tensor4 FcnMini::backward_impl(const Cache& c, const nn::Tensor4& grad_logits, Gradients& g) const {
  // The input gradient of a transposed convolution is the forward
  // correlation with the same (bias-free) kernel.
  const nn::Tensor4 g_fuse8 = nn::conv2d(grad_logits, up8_);
  const nn::Tensor4 g_fuse16 = nn::conv2d(g_fuse8, up2_);
  const nn::Tensor4 g_score32 = nn::conv2d(g_fuse16, up2_);

  auto s8 = nn::conv2d_backward(c.pool[2].output, layers_[static_cast<std::size_t>(score8_)].params, g_fuse8);
  auto s16 = nn::conv2d_backward(c.pool[3].output, layers_[static_cast<std::size_t>(score16_)].params, g_fuse16);
  auto s32 = nn::conv2d_backward(c.pool[4].output, layers_[static_cast<std::size_t>(score32_)].params, g_score32);
  accumulate(g, score8_, s8);
  accumulate(g, score16_, s16);
  accumulate(g, score32_, s32);

  nn::Tensor4 gh = s32.grad_x;  // gradient w.r.t. pool5 output
  for (int st = 4; st >= 0; --st) {
    if (st == 3) gh += s16.grad_x;
    if (st == 2) gh += s8.grad_x;
    gh = nn::maxpool2_backward(c.pool[st], gh);
    for (int j = 1; j >= 0; --j) {
      gh = nn::relu_backward(c.conv_out[st][j], gh);
      const int idx = conv_[st][j];
      auto cg = nn::conv2d_backward(c.conv_in[st][j], layers_[static_cast<std::size_t>(idx)].params, gh);
      accumulate(g, idx, cg);
      gh = std::move(cg.grad_x);
    }
  }
  return gh;
}

Gradients FcnMini::backward(const ForwardCache& cache, const nn::Tensor4& grad_logits) const {
  const auto* c = dynamic_cast<const Cache*>(&cache);
  if (!c) throw ValidationError("fcn: cache from a different architecture");
  Gradients g = zero_gradients();
  backward_impl(*c, grad_logits, g);
  return g;
}

nn::Tensor4 FcnMini::input_gradient(const ForwardCache& cache, const nn::Tensor4& grad_logits) const {
  const auto* c = dynamic_cast<const Cache*>(&cache);
  if (!c) throw ValidationError("fcn: cache from a different architecture");
  Gradients g = zero_gradients();
  return backward_impl(*c, grad_logits, g);
}

std::unique_ptr<SegmentationModel> build_fcn_mini(const FcnMiniConfig& cfg, std::uint64_t seed) {
  return std::make_unique<FcnMini>(cfg, seed);
}

}  // namespace pseg::models
