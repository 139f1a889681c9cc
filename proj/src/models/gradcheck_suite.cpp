#include "pseg/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "pseg/error.hpp"
#include "pseg/nn/ops.hpp"
#include "pseg/parallel.hpp"

namespace pseg {
namespace {

using nn::ConvParams;
using nn::GradCheckResult;
using nn::Shape4;
using nn::Tensor4;
using Objective = std::function<double(std::span<const double>)>;

Tensor4 random_tensor(Shape4 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor4 t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

ConvParams random_conv(int in_c, int out_c, int k, int stride, int dil, int pad, std::mt19937_64& rng) {
  ConvParams p;
  p.weights = random_tensor({out_c, in_c, k, k}, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  p.bias.resize(static_cast<std::size_t>(out_c));
  for (double& v : p.bias) v = u(rng);
  p.stride = stride;
  p.dilation = dil;
  p.padding = pad;
  return p;
}

Tensor4 as_tensor(Shape4 s, std::span<const double> v) { return Tensor4(s, std::vector<double>(v.begin(), v.end())); }

void keep_worse(GradCheckResult& acc, const GradCheckResult& r) {
  if (r.max_rel_error >= acc.max_rel_error) acc = r;
}

// Checks x, weights and bias of a conv-like op against <op(x), r>.
template <typename Forward, typename Backward>
GradCheckEntry check_conv_like(std::string name, const Tensor4& x, const ConvParams& p, Forward fwd, Backward bwd,
                               std::mt19937_64& rng, double eps) {
  const Tensor4 r = random_tensor(fwd(x, p).shape(), rng);
  const nn::ConvGrads g = bwd(x, p, r);
  GradCheckEntry e{std::move(name), {}, x.size() + p.weights.size() + p.bias.size()};
  keep_worse(e.result, nn::grad_check([&](std::span<const double> v) { return nn::dot(fwd(as_tensor(x.shape(), v), p), r); },
                                      x.span(), g.grad_x.span(), eps));
  keep_worse(e.result, nn::grad_check(
                           [&](std::span<const double> v) {
                             ConvParams q = p;
                             q.weights = as_tensor(p.weights.shape(), v);
                             return nn::dot(fwd(x, q), r);
                           },
                           p.weights.span(), g.grad_w.span(), eps));
  keep_worse(e.result, nn::grad_check(
                           [&](std::span<const double> v) {
                             ConvParams q = p;
                             q.bias.assign(v.begin(), v.end());
                             return nn::dot(fwd(x, q), r);
                           },
                           p.bias, g.grad_b, eps));
  return e;
}

// Settles each coordinate of `coords` at the largest kink-free step. Returns
// the worst error over settled coordinates; kinked ones stay in `coords`.
GradCheckResult stepped(const Objective& f, std::span<const double> point, std::span<const double> analytic,
                        std::vector<std::size_t>& coords, const ModelCheckOptions& opts,
                        std::vector<std::size_t>& per_step) {
  GradCheckResult worst;
  std::vector<double> recorded;
  const Objective recording = [&](std::span<const double> v) {
    const double y = f(v);
    recorded.push_back(y);
    return y;
  };
  for (std::size_t k = 0; k < opts.steps.size() && !coords.empty(); ++k) {
    recorded.clear();
    nn::grad_check_subset(recording, point, analytic, coords, opts.steps[k]);
    std::vector<std::size_t> smooth, kinked;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const bool kink = std::abs(recorded[2 * i] + recorded[2 * i + 1]) > opts.kink_tol;
      (kink ? kinked : smooth).push_back(coords[i]);
    }
    if (!smooth.empty()) keep_worse(worst, nn::grad_check_subset(f, point, analytic, smooth, opts.steps[k]));
    per_step[k] += smooth.size();
    coords = std::move(kinked);
  }
  return worst;
}

}  // namespace

std::vector<GradCheckEntry> check_layer_gradients(std::uint64_t seed, double eps) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> out;
  const auto conv = [](const Tensor4& x, const ConvParams& p) { return nn::conv2d(x, p); };
  const auto conv_back = [](const Tensor4& x, const ConvParams& p, const Tensor4& g) {
    return nn::conv2d_backward(x, p, g);
  };
  for (int dil : {1, 2, 4}) {
    const ConvParams p = random_conv(2, 3, 3, 1, dil, dil, rng);
    const Tensor4 x = random_tensor({1, 2, 9, 8}, rng);
    out.push_back(check_conv_like("conv2d_dilation" + std::to_string(dil), x, p, conv, conv_back, rng, eps));
  }
  {
    const ConvParams p = random_conv(2, 3, 3, 2, 1, 1, rng);
    const Tensor4 x = random_tensor({1, 2, 9, 8}, rng);
    out.push_back(check_conv_like("conv2d_stride2", x, p, conv, conv_back, rng, eps));
  }
  {
    ConvParams p = random_conv(2, 3, 4, 2, 1, 1, rng);
    p.bias.resize(2);
    const Tensor4 x = random_tensor({1, 3, 4, 5}, rng);
    out.push_back(check_conv_like(
        "transposed_conv2d", x, p, [](const Tensor4& a, const ConvParams& q) { return nn::transposed_conv2d(a, q); },
        [](const Tensor4& a, const ConvParams& q, const Tensor4& g) { return nn::transposed_conv2d_backward(a, q, g); },
        rng, eps));
  }
  {
    // Distinct values spaced 0.01 apart keep every window tie-free within eps.
    Tensor4 x({1, 2, 6, 6});
    std::vector<double> ramp(x.size());
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 0.01 * static_cast<double>(i);
    std::shuffle(ramp.begin(), ramp.end(), rng);
    x.values() = ramp;
    const nn::MaxPoolResult pooled = nn::maxpool2(x);
    const Tensor4 r = random_tensor(pooled.output.shape(), rng);
    const auto f = [&](std::span<const double> v) { return nn::dot(nn::maxpool2(as_tensor(x.shape(), v)).output, r); };
    out.push_back({"maxpool2", nn::grad_check(f, x.span(), nn::maxpool2_backward(pooled, r).span(), eps), x.size()});
  }
  {
    Tensor4 x = random_tensor({1, 2, 6, 6}, rng);
    for (double& v : x.values())
      if (std::abs(v) < 1e-3) v = 0.5;
    const Tensor4 r = random_tensor(x.shape(), rng);
    const auto f = [&](std::span<const double> v) { return nn::dot(nn::relu(as_tensor(x.shape(), v)), r); };
    out.push_back({"relu", nn::grad_check(f, x.span(), nn::relu_backward(x, r).span(), eps), x.size()});
  }
  {
    const Tensor4 logits = random_tensor({1, 2, 6, 7}, rng, -3.0, 3.0);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(6 * 7));
    std::bernoulli_distribution coin(0.5);
    for (auto& l : labels) l = coin(rng) ? 1 : 0;
    const nn::LossOutput loss = nn::softmax_cross_entropy(logits, labels);
    const auto f = [&](std::span<const double> v) {
      return nn::softmax_cross_entropy(as_tensor(logits.shape(), v), labels).loss;
    };
    out.push_back({"softmax_cross_entropy", nn::grad_check(f, logits.span(), loss.grad_logits.span(), eps),
                   logits.size()});
  }
  return out;
}

double ModelCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : layers) m = std::max(m, e.result.max_rel_error);
  return m;
}

void randomize_parameters(models::SegmentationModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : model.layers()) {
    const auto& s = layer.params.weights.shape();
    std::normal_distribution<double> w(0.0, std::sqrt(2.0 / (s.c * s.h * s.w)));
    for (double& v : layer.params.weights.values()) v = w(rng);
    std::normal_distribution<double> b(0.0, 0.1);
    for (double& v : layer.params.bias) v = b(rng);
  }
}

ModelCheckReport check_model_gradients(const models::SegmentationModel& model, std::uint64_t seed,
                                       const ModelCheckOptions& opts) {
  if (opts.steps.empty() || opts.max_attempts < 1) throw ValidationError("gradcheck: need steps and attempts");
  ModelCheckReport report;
  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(attempt));
    auto work = model.clone();
    randomize_parameters(*work, s);
    const int n = model.input_size();
    std::mt19937_64 rng(s);
    const Tensor4 x = random_tensor({1, 1, n, n}, rng, 0.0, 1.0);
    Tensor4 r({1, model.num_classes(), n, n});
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& v : r.values()) v = g(rng);

    std::unique_ptr<models::ForwardCache> cache;
    const Tensor4 base = work->forward(x, &cache);
    const models::Gradients grads = work->backward(*cache, r);
    const Tensor4 grad_x = work->input_gradient(*cache, r);
    std::vector<double> analytic;
    std::vector<double> theta;
    for (auto span : work->gradient_spans(grads)) analytic.insert(analytic.end(), span.begin(), span.end());
    for (const auto& p : work->parameters()) theta.insert(theta.end(), p.values.begin(), p.values.end());

    // Subtracting the baseline keeps summed magnitudes, and their roundoff,
    // proportional to the perturbation.
    const auto objective = [&](const Tensor4& y) {
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += (y.values()[i] - base.values()[i]) * r.values()[i];
      return acc;
    };
    auto probe = work->clone();
    const Objective f_params = [&](std::span<const double> v) {
      std::size_t at = 0;
      for (auto& p : probe->parameters()) {
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(at), p.values.size(), p.values.begin());
        at += p.values.size();
      }
      return objective(probe->forward(x));
    };
    const Objective f_input = [&](std::span<const double> v) { return objective(work->forward(as_tensor(x.shape(), v))); };

    report = ModelCheckReport{};
    report.attempts = attempt + 1;
    report.n_params = theta.size();
    report.n_inputs = x.size();
    report.per_step.assign(opts.steps.size(), 0);

    std::size_t at = 0;
    const auto params = work->parameters();
    for (std::size_t i = 0; i < params.size();) {
      const std::string layer = params[i].name.substr(0, params[i].name.rfind('.'));
      std::vector<std::size_t> coords;
      for (; i < params.size() && params[i].name.rfind(layer + ".", 0) == 0; ++i) {
        for (std::size_t k = 0; k < params[i].values.size(); ++k) coords.push_back(at++);
      }
      GradCheckEntry e{layer, {}, coords.size()};
      e.result = stepped(f_params, theta, analytic, coords, opts, report.per_step);
      report.unresolved += coords.size();
      report.layers.push_back(std::move(e));
    }
    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    GradCheckEntry e{"input", {}, coords.size()};
    e.result = stepped(f_input, x.span(), grad_x.span(), coords, opts, report.per_step);
    report.unresolved += coords.size();
    report.layers.push_back(std::move(e));
    if (report.unresolved == 0) break;
  }
  return report;
}

}  // namespace pseg
