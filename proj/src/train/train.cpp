#include "pseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "pseg/error.hpp"
#include "pseg/nn/adam.hpp"
#include "pseg/parallel.hpp"

namespace pseg {

void TrainConfig::validate() const {
  if (iterations < 1) throw ValidationError("train: iterations must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("train: lr must be a finite value >= 0");
  if (!(window.lo < window.hi)) throw ValidationError("train: window lo must be below hi");
}

TrainReport train(models::SegmentationModel& model, const std::vector<LabeledSlice>& dataset,
                  const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  const int size = model.input_size();
  for (const auto& s : dataset) {
    if (s.ct.width() != size || s.ct.height() != size || s.mask.width() != size || s.mask.height() != size) {
      throw ValidationError("train: slice " + slice_id(s) + " is not " + std::to_string(size) + "x" +
                            std::to_string(size));
    }
  }
  const auto start = std::chrono::steady_clock::now();

  auto params = model.parameters();
  std::vector<std::size_t> sizes;
  std::vector<std::span<double>> values;
  for (auto& p : params) {
    sizes.push_back(p.values.size());
    values.push_back(p.values);
  }
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::AdamState adam = nn::make_adam_state(adam_cfg, sizes);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  TrainReport report;
  report.loss.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (cursor == order.size()) {
      if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const LabeledSlice& sample = dataset[order[cursor++]];
    const nn::Tensor4 x = nn::image_to_tensor(normalize_window(sample.ct, cfg.window.lo, cfg.window.hi));

    std::unique_ptr<models::ForwardCache> cache;
    const nn::Tensor4 logits = model.forward(x, &cache);
    const nn::LossOutput loss = nn::softmax_cross_entropy(logits, sample.mask);
    if (!std::isfinite(loss.loss)) {
      throw ValidationError("train: non-finite loss at iteration " + std::to_string(it) + " (slice " +
                            slice_id(sample) + ")");
    }
    const models::Gradients grads = model.backward(*cache, loss.grad_logits);
    const auto grad_spans = model.gradient_spans(grads);
    nn::adam_step(adam, values, grad_spans);

    report.loss.push_back(loss.loss);
    if (progress) progress(it, loss.loss);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() && (it + 1) % cfg.checkpoint_every == 0 &&
        it + 1 < cfg.iterations) {
      models::save_checkpoint(model, {it + 1, cfg.model_seed}, cfg.checkpoint_path);
    }
  }
  if (!cfg.checkpoint_path.empty()) {
    models::save_checkpoint(model, {cfg.iterations, cfg.model_seed}, cfg.checkpoint_path);
    report.checkpoint = cfg.checkpoint_path;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_loss_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < report.loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, report.loss[i]);
    out << buf;
  }
  return out.str();
}

std::string slice_id(const LabeledSlice& s) { return s.patient_id + "_" + std::to_string(s.slice_index); }

EvaluationResult evaluate(const Predictor& predict, const std::vector<LabeledSlice>& testset, unsigned threads) {
  if (testset.empty()) throw ValidationError("evaluate: empty test set");
  EvaluationResult result;
  result.records.resize(testset.size());
  parallel_for(testset.size(), threads, [&](std::size_t i) {
    const LabeledSlice& s = testset[i];
    const BinaryMask2D pred = predict(s.ct);
    if (pred.width() != s.mask.width() || pred.height() != s.mask.height()) {
      throw ValidationError("evaluate: prediction size differs from mask for slice " + slice_id(s));
    }
    result.records[i] = evaluate_pair(slice_id(s), s.mask, pred);
  });
  result.summary = summarize(result.records);
  result.csv = format_report_csv(result.records, result.summary);
  return result;
}

EvaluationResult evaluate(const models::SegmentationModel& model, const std::vector<LabeledSlice>& testset,
                          const InputWindow& window, unsigned threads) {
  for (const auto& s : testset) {
    if (s.ct.width() != model.input_size() || s.ct.height() != model.input_size()) {
      throw ValidationError("evaluate: slice " + slice_id(s) + " does not match model input size " +
                            std::to_string(model.input_size()));
    }
  }
  return evaluate(
      [&](const ScalarImage2D& ct) { return model.predict(normalize_window(ct, window.lo, window.hi)); }, testset,
      threads);
}

namespace {

double source_coord(int o, int in, int out) { return (o + 0.5) * static_cast<double>(in) / out - 0.5; }

}  // namespace

ScalarImage2D resize_to(const ScalarImage2D& img, int size) {
  if (size < 8) throw ValidationError("resize_to: size must be >= 8");
  if (img.width() == size && img.height() == size) return img;
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  const int w = img.width();
  const int h = img.height();
  for (int y = 0; y < size; ++y) {
    const double sy = std::clamp(source_coord(y, h, size), 0.0, h - 1.0);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double ay = sy - y0;
    for (int x = 0; x < size; ++x) {
      const double sx = std::clamp(source_coord(x, w, size), 0.0, w - 1.0);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double ax = sx - x0;
      const double top = (1 - ax) * img.at(x0, y0) + ax * img.at(x1, y0);
      const double bottom = (1 - ax) * img.at(x0, y1) + ax * img.at(x1, y1);
      out[static_cast<std::size_t>(y) * size + x] = (1 - ay) * top + ay * bottom;
    }
  }
  const Spacing2D spacing{img.spacing().x * w / size, img.spacing().y * h / size};
  return ScalarImage2D(size, size, std::move(out), spacing);
}

BinaryMask2D resize_to(const BinaryMask2D& mask, int size) {
  if (size < 8) throw ValidationError("resize_to: size must be >= 8");
  if (mask.width() == size && mask.height() == size) return mask;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    const int sy = std::min(mask.height() - 1, static_cast<int>(std::floor((y + 0.5) * mask.height() / size)));
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(mask.width() - 1, static_cast<int>(std::floor((x + 0.5) * mask.width() / size)));
      out[static_cast<std::size_t>(y) * size + x] = mask.at(sx, sy);
    }
  }
  return BinaryMask2D(size, size, std::move(out));
}

LabeledSlice resize_to(const LabeledSlice& s, int size) {
  return {s.patient_id, s.slice_index, resize_to(s.ct, size), resize_to(s.mask, size)};
}

}  // namespace pseg
