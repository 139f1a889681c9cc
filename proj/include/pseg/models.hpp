#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pseg/imaging.hpp"
#include "pseg/nn/ops.hpp"

namespace pseg::models {

/// A trainable convolution. Weights and bias are stored in `params`.
struct ConvLayer {
  std::string name;
  nn::ConvParams params;
};

/// Gradient buffers aligned with a model's layer list.
struct Gradients {
  std::vector<nn::Tensor4> weight;
  std::vector<std::vector<double>> bias;
};

/// Named view of one trainable tensor (checkpoint order).
struct ParamView {
  std::string name;
  std::vector<int> dims;
  std::span<double> values;
};

/// Per-forward activations needed by backward.
struct ForwardCache {
  virtual ~ForwardCache() = default;
};

class SegmentationModel {
 public:
  virtual ~SegmentationModel() = default;

  virtual std::string arch() const = 0;
  virtual int input_size() const = 0;
  virtual int num_classes() const = 0;
  virtual std::unique_ptr<SegmentationModel> clone() const = 0;

  /// Logits (n, num_classes, h, w) at input resolution. When `cache` is
  /// non-null it receives the activations backward() needs.
  virtual nn::Tensor4 forward(const nn::Tensor4& x, std::unique_ptr<ForwardCache>* cache = nullptr) const = 0;
  /// Parameter gradients of <logits, grad_logits>. Fixed upsampling kernels
  /// are not parameters and get none.
  virtual Gradients backward(const ForwardCache& cache, const nn::Tensor4& grad_logits) const = 0;
  /// Gradient with respect to the network input.
  virtual nn::Tensor4 input_gradient(const ForwardCache& cache, const nn::Tensor4& grad_logits) const = 0;

  /// Single-image inference; the image must be input_size square.
  nn::Tensor4 forward(const ScalarImage2D& image) const;
  BinaryMask2D predict(const ScalarImage2D& image) const;

  std::vector<ConvLayer>& layers() { return layers_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  const ConvLayer& layer(const std::string& name) const;
  ConvLayer& layer(const std::string& name);

  std::vector<ParamView> parameters();
  std::vector<std::span<const double>> gradient_spans(const Gradients& g) const;
  std::size_t parameter_count() const;
  Gradients zero_gradients() const;

 protected:
  int add_layer(std::string name, nn::ConvParams params);
  /// He-style N(0, 2 / fan_in) weights for every layer not listed in
  /// `zero_layers`; all biases start at 0.
  void initialize(std::uint64_t seed, const std::vector<std::string>& zero_layers);

  std::vector<ConvLayer> layers_;
};

struct FcnMiniConfig {
  int input_size = 64;
  int base_channels = 8;
  int num_classes = 2;
  void validate() const;
};

/// FCN-8s-style network: five conv-ReLU x2 + maxpool stages, 1x1 score
/// convolutions on pool5 / pool4 / pool3, additive fusion after fixed
/// bilinear x2 upsampling, and a fixed bilinear x8 output upsampling.
class FcnMini final : public SegmentationModel {
 public:
  struct Cache : ForwardCache {
    nn::Tensor4 input;
    std::array<std::array<nn::Tensor4, 2>, 5> conv_in;   // input to each conv
    std::array<std::array<nn::Tensor4, 2>, 5> conv_out;  // pre-ReLU output
    std::array<nn::MaxPoolResult, 5> pool;
    nn::Tensor4 score32, score16, score8;  // score maps at strides 32/16/8
    nn::Tensor4 fuse16, fuse8;             // fused maps before upsampling
  };

  FcnMini(const FcnMiniConfig& cfg, std::uint64_t seed);

  std::string arch() const override { return "fcn"; }
  int input_size() const override { return cfg_.input_size; }
  int num_classes() const override { return cfg_.num_classes; }
  const FcnMiniConfig& config() const { return cfg_; }
  std::unique_ptr<SegmentationModel> clone() const override { return std::make_unique<FcnMini>(*this); }

  nn::Tensor4 forward(const nn::Tensor4& x, std::unique_ptr<ForwardCache>* cache = nullptr) const override;
  Gradients backward(const ForwardCache& cache, const nn::Tensor4& grad_logits) const override;
  nn::Tensor4 input_gradient(const ForwardCache& cache, const nn::Tensor4& grad_logits) const override;
  using SegmentationModel::forward;

 private:
  nn::Tensor4 backward_impl(const Cache& c, const nn::Tensor4& grad_logits, Gradients& g) const;

  FcnMiniConfig cfg_;
  std::array<std::array<int, 2>, 5> conv_{};
  int score32_ = 0, score16_ = 0, score8_ = 0;
  nn::ConvParams up2_;
  nn::ConvParams up8_;
};

struct AtrousMiniConfig {
  int input_size = 64;
  int base_channels = 8;
  int blocks_per_stage = 2;
  int num_classes = 2;
  std::array<int, 2> dilations{2, 4};
  void validate() const;
};

/// Residual network with output stride 8: stride-2 stem, residual stages at
/// strides 4, 8, 8, then dilated stages (rates from `dilations`), a 1x1
/// score convolution and fixed bilinear x8 upsampling.
///
/// Block: y = shortcut(x) + conv2(relu(conv1(relu(x)))), shortcut is the
/// identity or a bias-free strided 1x1 projection when shape changes. A ReLU
/// precedes the score convolution.
class AtrousMini final : public SegmentationModel {
 public:
  struct BlockCache {
    nn::Tensor4 input;
    nn::Tensor4 conv1_in;   // relu(input)
    nn::Tensor4 conv1_out;  // pre-ReLU
    nn::Tensor4 conv2_in;
  };
  struct Cache : ForwardCache {
    nn::Tensor4 input;
    nn::Tensor4 stem_out;  // pre-ReLU
    std::vector<BlockCache> blocks;
    nn::Tensor4 features;  // deepest feature map, pre-ReLU
    nn::Tensor4 score_in;
    nn::Tensor4 score;     // stride-8 score map
  };
  struct Block {
    int conv1 = 0;
    int conv2 = 0;
    int shortcut = -1;  // -1: identity
  };

  AtrousMini(const AtrousMiniConfig& cfg, std::uint64_t seed);

  std::string arch() const override { return "atrous"; }
  int input_size() const override { return cfg_.input_size; }
  int num_classes() const override { return cfg_.num_classes; }
  const AtrousMiniConfig& config() const { return cfg_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::unique_ptr<SegmentationModel> clone() const override { return std::make_unique<AtrousMini>(*this); }

  nn::Tensor4 forward(const nn::Tensor4& x, std::unique_ptr<ForwardCache>* cache = nullptr) const override;
  Gradients backward(const ForwardCache& cache, const nn::Tensor4& grad_logits) const override;
  nn::Tensor4 input_gradient(const ForwardCache& cache, const nn::Tensor4& grad_logits) const override;
  using SegmentationModel::forward;

  const nn::ConvParams& upsampler() const { return up8_; }

 private:
  nn::Tensor4 backward_impl(const Cache& c, const nn::Tensor4& grad_logits, Gradients& g) const;

  AtrousMiniConfig cfg_;
  int stem_ = 0;
  int score_ = 0;
  std::vector<Block> blocks_;
  nn::ConvParams up8_;
};

std::unique_ptr<SegmentationModel> build_fcn_mini(const FcnMiniConfig& cfg, std::uint64_t seed);
std::unique_ptr<SegmentationModel> build_atrous_mini(const AtrousMiniConfig& cfg, std::uint64_t seed);

/// Training metadata stored with the weights.
struct CheckpointMeta {
  std::uint64_t iterations = 0;
  std::uint64_t seed = 0;
};

struct CheckpointTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct Checkpoint {
  std::vector<CheckpointTensor> tensors;
  CheckpointMeta meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serializes trainable tensors as float32 (format documented in README).
std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

Checkpoint snapshot(SegmentationModel& model, const CheckpointMeta& meta);
void save_checkpoint(SegmentationModel& model, const CheckpointMeta& meta, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into `model`; names, order and shapes must
/// match the architecture.
void apply_checkpoint(const Checkpoint& ckpt, SegmentationModel& model);
CheckpointMeta load_checkpoint(const std::filesystem::path& path, SegmentationModel& model);

/// Rebuilds the architecture recorded in a checkpoint (arch from the tensor
/// name prefix, widths from tensor shapes) for the given input size.
std::unique_ptr<SegmentationModel> load_model(const std::filesystem::path& path, int input_size,
                                              CheckpointMeta* meta = nullptr);

}  // namespace pseg::models
