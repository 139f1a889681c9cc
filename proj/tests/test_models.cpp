#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "model_check.hpp"
#include "oracles.hpp"
#include "pseg/error.hpp"
#include "pseg/models.hpp"

using namespace pseg;
using namespace pseg::models;
using nn::Shape4;
using nn::Tensor4;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pseg_models_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensor4 random_input(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor({1, 1, n, n}, rng, 0.0, 1.0);
}

std::vector<std::unique_ptr<SegmentationModel>> both(const FcnMiniConfig& f, const AtrousMiniConfig& a,
                                                     std::uint64_t seed) {
  std::vector<std::unique_ptr<SegmentationModel>> out;
  out.push_back(build_fcn_mini(f, seed));
  out.push_back(build_atrous_mini(a, seed));
  return out;
}

bool all_finite(const Tensor4& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TEST_CASE("fcn topology at 64x64") {
  FcnMini m({64, 8, 2}, 1);
  std::unique_ptr<ForwardCache> cache;
  Tensor4 y = m.forward(random_input(64, 2), &cache);
  CHECK(y.shape() == Shape4{1, 2, 64, 64});
  CHECK(all_finite(y));
  const auto& c = dynamic_cast<const FcnMini::Cache&>(*cache);
  CHECK(c.score32.shape() == Shape4{1, 2, 2, 2});
  CHECK(c.score16.shape() == Shape4{1, 2, 4, 4});
  CHECK(c.score8.shape() == Shape4{1, 2, 8, 8});
  CHECK(c.pool[4].output.shape() == Shape4{1, 64, 2, 2});
  CHECK(c.pool[3].output.shape() == Shape4{1, 64, 4, 4});
  CHECK(c.pool[2].output.shape() == Shape4{1, 32, 8, 8});
  for (int s = 0; s < 5; ++s) CHECK(c.pool[s].output.shape().h == 64 >> (s + 1));
}

TEST_CASE("atrous topology at 64x64") {
  AtrousMini m({64, 8, 2, 2, {2, 4}}, 1);
  std::unique_ptr<ForwardCache> cache;
  Tensor4 y = m.forward(random_input(64, 3), &cache);
  CHECK(y.shape() == Shape4{1, 2, 64, 64});
  CHECK(all_finite(y));
  const auto& c = dynamic_cast<const AtrousMini::Cache&>(*cache);
  CHECK(c.stem_out.shape().h == 32);
  CHECK(c.features.shape().h == 8);
  CHECK(c.features.shape().w == 8);
  CHECK(c.score.shape() == Shape4{1, 2, 8, 8});
  // Dilated stages keep stride 8.
  const std::size_t nb = m.blocks().size();
  CHECK(nb == 10);
  CHECK(c.blocks[nb - 1].input.shape().h == 8);
  CHECK(m.layer("atrous.stage4.block1.conv1").params.dilation == 2);
  CHECK(m.layer("atrous.stage5.block2.conv2").params.dilation == 4);
}

TEST_CASE("output resolution equals input resolution") {
  for (int n : {32, 64, 96}) {
    FcnMini m({n, 2, 2}, 1);
    CHECK(m.forward(random_input(n, 4)).shape() == Shape4{1, 2, n, n});
  }
  for (int n : {8, 16, 24, 40}) {
    AtrousMini m({n, 2, 1, 2, {2, 4}}, 1);
    CHECK(m.forward(random_input(n, 5)).shape() == Shape4{1, 2, n, n});
  }
  FcnMini three({32, 2, 3}, 1);
  CHECK(three.forward(random_input(32, 6)).shape().c == 3);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(FcnMini({48, 8, 2}, 1), ValidationError);
  CHECK_THROWS_AS(FcnMini({64, 0, 2}, 1), ValidationError);
  CHECK_THROWS_AS(FcnMini({64, 8, 1}, 1), ValidationError);
  CHECK_THROWS_AS(AtrousMini({12, 8, 2, 2, {2, 4}}, 1), ValidationError);
  CHECK_THROWS_AS(AtrousMini({16, 8, 0, 2, {2, 4}}, 1), ValidationError);
  CHECK_THROWS_AS(AtrousMini({16, 8, 2, 2, {0, 4}}, 1), ValidationError);
  FcnMini m({32, 2, 2}, 1);
  CHECK_THROWS_AS(m.forward(ScalarImage2D(16, 16)), ValidationError);
}

TEST_CASE("initialization is deterministic by seed") {
  FcnMini a({32, 4, 2}, 9), b({32, 4, 2}, 9), c({32, 4, 2}, 10);
  CHECK(modelcheck::flatten(a) == modelcheck::flatten(b));
  CHECK(modelcheck::flatten(a) != modelcheck::flatten(c));
  AtrousMini d({16, 4, 2, 2, {2, 4}}, 9), e({16, 4, 2, 2, {2, 4}}, 9);
  CHECK(modelcheck::flatten(d) == modelcheck::flatten(e));
}

TEST_CASE("zero score convs give uniform initial predictions") {
  for (auto& m : both({32, 4, 2}, {16, 4, 1, 2, {2, 4}}, 1)) {
    Tensor4 y = m->forward(random_input(m->input_size(), 7));
    for (double v : y.values()) CHECK(v == 0.0);
    ScalarImage2D img(m->input_size(), m->input_size());
    CHECK(m->predict(img).foreground_count() == 0);
    CHECK(m->predict(img).width() == m->input_size());
  }
}

TEST_CASE("fcn fusion is linear in the score maps") {
  FcnMini m({64, 4, 2}, 1);
  modelcheck::randomize(m, 11);
  const Tensor4 x = random_input(64, 12);
  const Tensor4 y = m.forward(x);
  for (const char* name : {"fcn.score_pool5", "fcn.score_pool4", "fcn.score_pool3"}) {
    auto& p = m.layer(name).params;
    for (double& v : p.weights.values()) v *= 2.0;
    for (double& v : p.bias) v *= 2.0;
  }
  const Tensor4 y2 = m.forward(x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y2.values()[i] == 2.0 * y.values()[i]);
}

TEST_CASE("atrous with zeroed residual branches reduces to the shortcut path") {
  AtrousMini m({32, 4, 2, 2, {2, 4}}, 1);
  modelcheck::randomize(m, 13);
  for (const auto& blk : m.blocks()) {
    auto& p = m.layers()[static_cast<std::size_t>(blk.conv2)].params;
    p.weights.fill(0.0);
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
  }
  const Tensor4 x = random_input(32, 14);
  const Tensor4 got = m.forward(x);

  // Independent oracle built from direct loops: relu(stem) -> shortcut chain
  // -> relu -> score -> x8 bilinear.
  const auto& stem = m.layer("atrous.stem").params;
  Tensor4 h = oracle::conv_direct(x, stem.weights, stem.bias, stem.stride, stem.dilation, stem.padding);
  for (double& v : h.values()) v = std::max(v, 0.0);
  for (const auto& blk : m.blocks()) {
    if (blk.shortcut < 0) continue;
    const auto& s = m.layers()[static_cast<std::size_t>(blk.shortcut)].params;
    h = oracle::conv_direct(h, s.weights, s.bias, s.stride, s.dilation, s.padding);
  }
  for (double& v : h.values()) v = std::max(v, 0.0);
  const auto& sc = m.layer("atrous.score").params;
  const Tensor4 score = oracle::conv_direct(h, sc.weights, sc.bias, 1, 1, 0);
  const auto& up = m.upsampler();
  const Tensor4 want = oracle::transposed_direct(score, up.weights, up.stride, up.padding);
  REQUIRE(want.shape() == got.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(want.values()[i] - got.values()[i]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("atrous parameter count does not depend on dilation") {
  const std::size_t base = AtrousMini({64, 8, 2, 2, {1, 1}}, 1).parameter_count();
  for (std::array<int, 2> d : {std::array{2, 4}, std::array{3, 7}, std::array{4, 2}}) {
    CHECK(AtrousMini({64, 8, 2, 2, d}, 1).parameter_count() == base);
  }
  CHECK(AtrousMini({64, 8, 2, 2, {2, 4}}, 1).parameter_count() ==
        AtrousMini({16, 8, 2, 2, {2, 4}}, 1).parameter_count());
}

TEST_CASE("every trainable tensor receives gradient") {
  for (auto& m : both({32, 4, 2}, {32, 4, 2, 2, {2, 4}}, 1)) {
    modelcheck::randomize(*m, 15);
    std::mt19937_64 rng(16);
    const Tensor4 x = random_input(32, 17);
    std::unique_ptr<ForwardCache> cache;
    const Tensor4 y = m->forward(x, &cache);
    const Tensor4 r = oracle::random_tensor(y.shape(), rng);
    const Gradients g = m->backward(*cache, r);
    REQUIRE(g.weight.size() == m->layers().size());
    for (std::size_t i = 0; i < m->layers().size(); ++i) {
      CAPTURE(m->layers()[i].name);
      bool any = false;
      for (double v : g.weight[i].values()) any = any || v != 0.0;
      CHECK(any);
      if (!m->layers()[i].params.bias.empty()) {
        bool any_bias = false;
        for (double v : g.bias[i]) any_bias = any_bias || v != 0.0;
        CHECK(any_bias);
      }
    }
    // Only convolution layers are trainable; the fixed upsamplers are not layers.
    for (const auto& l : m->layers()) CHECK(l.name.find("up") == std::string::npos);
  }
}

TEST_CASE("model gradients on the smallest configurations") {
  // The acceptance suite sweeps wider models.
  for (auto& m : both({32, 1, 2}, {8, 1, 1, 2, {2, 4}}, 1)) {
    CAPTURE(m->arch());
    const auto out = pseg::check_model_gradients(*m, 21);
    CHECK(out.unresolved == 0);
    CHECK(out.n_params == m->parameter_count());
    CHECK(out.layers.size() == m->layers().size() + 1);
    CHECK(out.max_rel_error() <= 1e-5);
  }
}

TEST_CASE("checkpoint round trip") {
  const fs::path dir = temp_dir("roundtrip");
  for (auto& m : both({32, 4, 2}, {16, 4, 2, 2, {2, 4}}, 3)) {
    modelcheck::randomize(*m, 23);
    const fs::path path = dir / (m->arch() + ".ckpt");
    save_checkpoint(*m, {123, 77}, path);

    CheckpointMeta meta;
    auto loaded = load_model(path, m->input_size(), &meta);
    CHECK(meta.iterations == 123);
    CHECK(meta.seed == 77);
    CHECK(loaded->arch() == m->arch());
    CHECK(loaded->parameter_count() == m->parameter_count());

    const Tensor4 x = random_input(m->input_size(), 24);
    const Tensor4 a = m->forward(x);
    const Tensor4 b = loaded->forward(x);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    CHECK(worst <= 1e-6);

    auto fresh = m->clone();
    modelcheck::randomize(*fresh, 99);
    const CheckpointMeta m2 = load_checkpoint(path, *fresh);
    CHECK(m2.iterations == 123);
    CHECK(modelcheck::flatten(*fresh) == modelcheck::flatten(*loaded));

    // Stored values are float32.
    auto ckpt = read_checkpoint(path);
    auto params = m->parameters();
    REQUIRE(ckpt.tensors.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      CHECK(ckpt.tensors[i].name == params[i].name);
      CHECK(ckpt.tensors[i].values.front() == static_cast<float>(params[i].values.front()));
    }
  }
}

TEST_CASE("checkpoint encoding layout") {
  Checkpoint c;
  c.tensors.push_back({"a", {2}, {1.0f, -2.0f}});
  c.meta = {5, 6};
  const auto bytes = encode_checkpoint(c);
  // magic(4) version(4) count(4) namelen(4) name(1) rank(4) dim(4) payload(8) meta(16)
  REQUIRE(bytes.size() == 49);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PSEG");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);
  CHECK(bytes[16] == 'a');
  CHECK(bytes[33] == 5);
  CHECK(bytes[41] == 6);
  const Checkpoint d = decode_checkpoint(bytes);
  CHECK(d.tensors[0].values == c.tensors[0].values);
  CHECK(d.meta.seed == 6);

  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad_version), doctest::Contains("version mismatch"), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), IoError);
}

TEST_CASE("truncated checkpoint") {
  const fs::path dir = temp_dir("truncated");
  auto m = build_fcn_mini({32, 2, 2}, 1);
  const fs::path path = dir / "m.ckpt";
  save_checkpoint(*m, {}, path);
  const auto size = fs::file_size(path);
  for (auto cut : {size - 1, size / 2, std::uintmax_t{10}}) {
    fs::resize_file(path, cut);
    CHECK_THROWS_WITH_AS(read_checkpoint(path), "unexpected end of checkpoint", IoError);
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST_CASE("checkpoint of one architecture does not load into the other") {
  const fs::path dir = temp_dir("cross");
  auto fcn = build_fcn_mini({32, 4, 2}, 1);
  save_checkpoint(*fcn, {}, dir / "fcn.ckpt");
  auto atrous = build_atrous_mini({32, 4, 2, 2, {2, 4}}, 1);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "fcn.ckpt", *atrous), doctest::Contains("fcn.conv1_1.weight"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "fcn.ckpt", *atrous), doctest::Contains("shape mismatch"),
                       ValidationError);

  auto wide = build_fcn_mini({32, 8, 2}, 1);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "fcn.ckpt", *wide), doctest::Contains("fcn.conv1_1.weight"),
                       ValidationError);
}

TEST_CASE("layer gradient suite") {
  const auto entries = pseg::check_layer_gradients(5);
  CHECK(entries.size() == 8);
  for (const auto& e : entries) {
    CAPTURE(e.name);
    CHECK(e.coords > 0);
    CHECK(e.result.max_rel_error <= 1e-6);
  }
}
