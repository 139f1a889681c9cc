#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "pseg/error.hpp"
#include "pseg/models.hpp"

namespace fs = std::filesystem;

namespace pseg::models {
namespace {

constexpr std::array<unsigned char, 4> kMagic{'P', 'S', 'E', 'G'};

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    std::array<unsigned char, sizeof(T)> raw{};
    take(raw.data(), raw.size());
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
  }

  void take(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) throw IoError("unexpected end of checkpoint");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::string dims_str(const std::vector<std::uint32_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? ", " : "") + std::to_string(dims[i]);
  return s + ")";
}

const CheckpointTensor& find_tensor(const Checkpoint& ckpt, const std::string& name) {
  for (const auto& t : ckpt.tensors) {
    if (t.name == name) return t;
  }
  throw ValidationError("checkpoint lacks tensor " + name);
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint32_t>(out, d);
    for (float v : t.values) put<float>(out, v);
  }
  put<std::uint64_t>(out, ckpt.meta.iterations);
  put<std::uint64_t>(out, ckpt.meta.seed);
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader in(bytes);
  std::array<unsigned char, 4> magic{};
  in.take(magic.data(), magic.size());
  if (magic != kMagic) throw IoError("not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name.resize(in.get<std::uint32_t>());
    in.take(t.name.data(), t.name.size());
    const auto rank = in.get<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(in.get<std::uint32_t>());
      n *= t.dims.back();
    }
    t.values.resize(n);
    for (auto& v : t.values) v = in.get<float>();
    for (const auto& prev : ckpt.tensors) {
      if (prev.name == t.name) throw IoError("duplicate checkpoint tensor " + t.name);
    }
    ckpt.tensors.push_back(std::move(t));
  }
  ckpt.meta.iterations = in.get<std::uint64_t>();
  ckpt.meta.seed = in.get<std::uint64_t>();
  if (!in.done()) throw IoError("trailing bytes after checkpoint metadata");
  return ckpt;
}

Checkpoint snapshot(SegmentationModel& model, const CheckpointMeta& meta) {
  Checkpoint ckpt;
  ckpt.meta = meta;
  for (const auto& p : model.parameters()) {
    CheckpointTensor t;
    t.name = p.name;
    for (int d : p.dims) t.dims.push_back(static_cast<std::uint32_t>(d));
    t.values.reserve(p.values.size());
    for (double v : p.values) t.values.push_back(static_cast<float>(v));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void save_checkpoint(SegmentationModel& model, const CheckpointMeta& meta, const fs::path& path) {
  const auto bytes = encode_checkpoint(snapshot(model, meta));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  return decode_checkpoint(bytes);
}

void apply_checkpoint(const Checkpoint& ckpt, SegmentationModel& model) {
  auto params = model.parameters();
  const std::size_t common = std::min(params.size(), ckpt.tensors.size());
  for (std::size_t i = 0; i < common; ++i) {
    const auto& t = ckpt.tensors[i];
    std::vector<std::uint32_t> expected;
    for (int d : params[i].dims) expected.push_back(static_cast<std::uint32_t>(d));
    if (t.name != params[i].name) {
      throw ValidationError("shape mismatch: checkpoint tensor " + t.name + " " + dims_str(t.dims) + " where " +
                            model.arch() + " model expects " + params[i].name + " " + dims_str(expected));
    }
    if (t.dims != expected) {
      throw ValidationError("shape mismatch for tensor " + t.name + ": checkpoint " + dims_str(t.dims) +
                            ", model " + dims_str(expected));
    }
  }
  if (ckpt.tensors.size() != params.size()) {
    throw ValidationError("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, " + model.arch() +
                          " model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(ckpt.tensors[i].values.begin(), ckpt.tensors[i].values.end(), params[i].values.begin());
  }
}

CheckpointMeta load_checkpoint(const fs::path& path, SegmentationModel& model) {
  const Checkpoint ckpt = read_checkpoint(path);
  apply_checkpoint(ckpt, model);
  return ckpt.meta;
}

std::unique_ptr<SegmentationModel> load_model(const fs::path& path, int input_size, CheckpointMeta* meta) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.tensors.empty()) throw ValidationError("checkpoint holds no tensors");
  const std::string& first = ckpt.tensors.front().name;
  std::unique_ptr<SegmentationModel> model;
  if (first.rfind("fcn.", 0) == 0) {
    FcnMiniConfig cfg;
    cfg.input_size = input_size;
    cfg.base_channels = static_cast<int>(find_tensor(ckpt, "fcn.conv1_1.weight").dims.at(0));
    cfg.num_classes = static_cast<int>(find_tensor(ckpt, "fcn.score_pool5.weight").dims.at(0));
    model = build_fcn_mini(cfg, 0);
  } else if (first.rfind("atrous.", 0) == 0) {
    AtrousMiniConfig cfg;
    cfg.input_size = input_size;
    cfg.base_channels = static_cast<int>(find_tensor(ckpt, "atrous.stem.weight").dims.at(0));
    cfg.num_classes = static_cast<int>(find_tensor(ckpt, "atrous.score.weight").dims.at(0));
    cfg.blocks_per_stage = static_cast<int>(std::count_if(ckpt.tensors.begin(), ckpt.tensors.end(), [](const auto& t) {
      return t.name.rfind("atrous.stage1.block", 0) == 0 && t.name.ends_with(".conv1.weight");
    }));
    model = build_atrous_mini(cfg, 0);
  } else {
    throw ValidationError("checkpoint architecture not recognised from tensor " + first);
  }
  apply_checkpoint(ckpt, *model);
  if (meta) *meta = ckpt.meta;
  return model;
}

}  // namespace pseg::models
