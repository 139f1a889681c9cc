#include "pseg/error.hpp"
#include "pseg/models.hpp"

namespace pseg::models {
namespace {

void accumulate(Gradients& g, int idx, const nn::ConvGrads& cg) {
  g.weight[static_cast<std::size_t>(idx)] += cg.grad_w;
  auto& b = g.bias[static_cast<std::size_t>(idx)];
  for (std::size_t i = 0; i < cg.grad_b.size(); ++i) b[i] += cg.grad_b[i];
}

struct StageSpec {
  int width_multiplier;
  int stride;
  int dilation;
};

}  // namespace

void AtrousMiniConfig::validate() const {
  if (input_size < 8 || input_size % 8 != 0) {
    throw ValidationError("atrous: input_size must be a positive multiple of 8, got " + std::to_string(input_size));
  }
  if (base_channels < 1) throw ValidationError("atrous: base_channels must be >= 1");
  if (blocks_per_stage < 1) throw ValidationError("atrous: blocks_per_stage must be >= 1");
  if (num_classes < 2) throw ValidationError("atrous: num_classes must be >= 2");
  for (int d : dilations) {
    if (d < 1) throw ValidationError("atrous: dilation rates must be >= 1");
  }
}

AtrousMini::AtrousMini(const AtrousMiniConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  const int b = cfg.base_channels;
  stem_ = add_layer("atrous.stem", nn::make_conv(1, b, 3, 2));

  const std::array<StageSpec, 5> stages{{
      {1, 2, 1},                 // stride 4
      {2, 2, 1},                 // stride 8
      {2, 1, 1},                 // stride 8
      {4, 1, cfg.dilations[0]},  // stride 8, dilated
      {4, 1, cfg.dilations[1]},  // stride 8, dilated
  }};
  int in_c = b;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const int out_c = stages[s].width_multiplier * b;
    for (int k = 0; k < cfg.blocks_per_stage; ++k) {
      const std::string prefix = "atrous.stage" + std::to_string(s + 1) + ".block" + std::to_string(k + 1);
      const int stride = k == 0 ? stages[s].stride : 1;
      Block blk;
      blk.conv1 = add_layer(prefix + ".conv1", nn::make_conv(in_c, out_c, 3, stride, stages[s].dilation));
      blk.conv2 = add_layer(prefix + ".conv2", nn::make_conv(out_c, out_c, 3, 1, stages[s].dilation));
      if (stride != 1 || in_c != out_c) {
        blk.shortcut = add_layer(prefix + ".shortcut", nn::make_conv(in_c, out_c, 1, stride, 1, false));
      }
      blocks_.push_back(blk);
      in_c = out_c;
    }
  }
  score_ = add_layer("atrous.score", nn::make_conv(in_c, cfg.num_classes, 1));
  initialize(seed, {"atrous.score"});
  up8_ = nn::bilinear_kernel(8, cfg.num_classes);
}

nn::Tensor4 AtrousMini::forward(const nn::Tensor4& x, std::unique_ptr<ForwardCache>* cache) const {
  const auto& s = x.shape();
  if (s.c != 1 || s.h % 8 != 0 || s.w % 8 != 0 || s.h < 8 || s.w < 8) {
    throw ValidationError("atrous: input must be (n, 1, 8k, 8k), got " + s.str());
  }
  auto c = std::make_unique<Cache>();
  c->input = x;
  c->stem_out = nn::conv2d(x, layers_[static_cast<std::size_t>(stem_)].params);
  nn::Tensor4 h = nn::relu(c->stem_out);
  c->blocks.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& blk = blocks_[i];
    BlockCache& bc = c->blocks[i];
    bc.input = std::move(h);
    bc.conv1_in = nn::relu(bc.input);
    bc.conv1_out = nn::conv2d(bc.conv1_in, layers_[static_cast<std::size_t>(blk.conv1)].params);
    bc.conv2_in = nn::relu(bc.conv1_out);
    h = nn::conv2d(bc.conv2_in, layers_[static_cast<std::size_t>(blk.conv2)].params);
    if (blk.shortcut >= 0) {
      h += nn::conv2d(bc.input, layers_[static_cast<std::size_t>(blk.shortcut)].params);
    } else {
      h += bc.input;
    }
  }
  c->features = std::move(h);
  c->score_in = nn::relu(c->features);
  c->score = nn::conv2d(c->score_in, layers_[static_cast<std::size_t>(score_)].params);
  nn::Tensor4 logits = nn::transposed_conv2d(c->score, up8_);
  if (cache) *cache = std::move(c);
  return logits;
}

nn::Tensor4 AtrousMini::backward_impl(const Cache& c, const nn::Tensor4& grad_logits, Gradients& g) const {
  const nn::Tensor4 g_score = nn::conv2d(grad_logits, up8_);
  auto sg = nn::conv2d_backward(c.score_in, layers_[static_cast<std::size_t>(score_)].params, g_score);
  accumulate(g, score_, sg);
  nn::Tensor4 gh = nn::relu_backward(c.features, sg.grad_x);

  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const Block& blk = blocks_[i];
    const BlockCache& bc = c.blocks[i];
    auto g2 = nn::conv2d_backward(bc.conv2_in, layers_[static_cast<std::size_t>(blk.conv2)].params, gh);
    accumulate(g, blk.conv2, g2);
    const nn::Tensor4 g_z1 = nn::relu_backward(bc.conv1_out, g2.grad_x);
    auto g1 = nn::conv2d_backward(bc.conv1_in, layers_[static_cast<std::size_t>(blk.conv1)].params, g_z1);
    accumulate(g, blk.conv1, g1);
    nn::Tensor4 g_in = nn::relu_backward(bc.input, g1.grad_x);
    if (blk.shortcut >= 0) {
      auto gs = nn::conv2d_backward(bc.input, layers_[static_cast<std::size_t>(blk.shortcut)].params, gh);
      accumulate(g, blk.shortcut, gs);
      g_in += gs.grad_x;
    } else {
      g_in += gh;
    }
    gh = std::move(g_in);
  }
  gh = nn::relu_backward(c.stem_out, gh);
  auto gs = nn::conv2d_backward(c.input, layers_[static_cast<std::size_t>(stem_)].params, gh);
  accumulate(g, stem_, gs);
  return std::move(gs.grad_x);
}

Gradients AtrousMini::backward(const ForwardCache& cache, const nn::Tensor4& grad_logits) const {
  const auto* c = dynamic_cast<const Cache*>(&cache);
  if (!c) throw ValidationError("atrous: cache from a different architecture");
  Gradients g = zero_gradients();
  backward_impl(*c, grad_logits, g);
  return g;
}

nn::Tensor4 AtrousMini::input_gradient(const ForwardCache& cache, const nn::Tensor4& grad_logits) const {
  const auto* c = dynamic_cast<const Cache*>(&cache);
  if (!c) throw ValidationError("atrous: cache from a different architecture");
  Gradients g = zero_gradients();
  return backward_impl(*c, grad_logits, g);
}

std::unique_ptr<SegmentationModel> build_atrous_mini(const AtrousMiniConfig& cfg, std::uint64_t seed) {
  return std::make_unique<AtrousMini>(cfg, seed);
}

}  // namespace pseg::models
