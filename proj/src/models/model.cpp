#include <algorithm>
#include <cmath>
#include <random>

#include "pseg/error.hpp"
#include "pseg/models.hpp"

namespace pseg::models {

nn::Tensor4 SegmentationModel::forward(const ScalarImage2D& image) const {
  if (image.width() != input_size() || image.height() != input_size()) {
    throw ValidationError(arch() + " model expects " + std::to_string(input_size()) + "x" +
                          std::to_string(input_size()) + " input, got " + std::to_string(image.width()) + "x" +
                          std::to_string(image.height()));
  }
  return forward(nn::image_to_tensor(image));
}

BinaryMask2D SegmentationModel::predict(const ScalarImage2D& image) const { return nn::argmax_mask(forward(image)); }

const ConvLayer& SegmentationModel::layer(const std::string& name) const {
  auto it = std::find_if(layers_.begin(), layers_.end(), [&](const ConvLayer& l) { return l.name == name; });
  if (it == layers_.end()) throw ValidationError("no layer named " + name);
  return *it;
}

ConvLayer& SegmentationModel::layer(const std::string& name) {
  return const_cast<ConvLayer&>(static_cast<const SegmentationModel&>(*this).layer(name));
}

std::vector<ParamView> SegmentationModel::parameters() {
  std::vector<ParamView> out;
  for (auto& l : layers_) {
    const auto& s = l.params.weights.shape();
    out.push_back({l.name + ".weight", {s.n, s.c, s.h, s.w}, l.params.weights.span()});
    if (!l.params.bias.empty()) {
      out.push_back({l.name + ".bias", {static_cast<int>(l.params.bias.size())}, std::span<double>(l.params.bias)});
    }
  }
  return out;
}

std::vector<std::span<const double>> SegmentationModel::gradient_spans(const Gradients& g) const {
  if (g.weight.size() != layers_.size() || g.bias.size() != layers_.size()) {
    throw ValidationError("gradient buffers do not match the layer list");
  }
  std::vector<std::span<const double>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.emplace_back(g.weight[i].span());
    if (!layers_[i].params.bias.empty()) out.emplace_back(g.bias[i]);
  }
  return out;
}

std::size_t SegmentationModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.params.weights.size() + l.params.bias.size();
  return n;
}

Gradients SegmentationModel::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.weight.emplace_back(l.params.weights.shape());
    g.bias.emplace_back(l.params.bias.size(), 0.0);
  }
  return g;
}

int SegmentationModel::add_layer(std::string name, nn::ConvParams params) {
  layers_.push_back({std::move(name), std::move(params)});
  return static_cast<int>(layers_.size()) - 1;
}

void SegmentationModel::initialize(std::uint64_t seed, const std::vector<std::string>& zero_layers) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) {
    std::fill(l.params.bias.begin(), l.params.bias.end(), 0.0);
    auto& w = l.params.weights;
    if (std::find(zero_layers.begin(), zero_layers.end(), l.name) != zero_layers.end()) {
      w.fill(0.0);
      continue;
    }
    const auto& s = w.shape();
    const double fan_in = static_cast<double>(s.c) * s.h * s.w;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (double& v : w.values()) v = dist(rng);
  }
}

}  // namespace pseg::models
