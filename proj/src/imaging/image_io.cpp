#include "pseg/image_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "pseg/error.hpp"

namespace fs = std::filesystem;

namespace pseg {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view token, const std::string& key) {
  T value{};
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ValidationError("malformed header key " + key + ": cannot parse '" + std::string(token) + "'");
  }
  return value;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

ElementType parse_element_type(std::string_view s) {
  if (s == "uint8" || s == "MET_UCHAR") return ElementType::uint8;
  if (s == "int16" || s == "MET_SHORT") return ElementType::int16;
  if (s == "uint16" || s == "MET_USHORT") return ElementType::uint16;
  if (s == "float32" || s == "MET_FLOAT") return ElementType::float32;
  throw ValidationError("unsupported ElementType: " + std::string(s));
}

std::size_t element_bytes(ElementType t) {
  switch (t) {
    case ElementType::uint8:
      return 1;
    case ElementType::int16:
    case ElementType::uint16:
      return 2;
    case ElementType::float32:
      return 4;
  }
  return 0;
}

template <typename T>
T load_le(const unsigned char* p) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

template <typename T>
void store_le(T value, std::vector<unsigned char>& out) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed: " + path.string());
}

// Header keys that may appear in MetaImage files and carry no information we
// need, as long as their values are benign.
bool is_ignorable_key(std::string_view key) {
  static const std::array<std::string_view, 8> keys = {"ObjectType",      "BinaryData",      "Offset",
                                                       "TransformMatrix", "CenterOfRotation", "AnatomicalOrientation",
                                                       "ElementNumberOfChannels", "Comment"};
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_pnm_header(const std::vector<unsigned char>& bytes, const fs::path& path) {
  PnmHeader h;
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    if (tok.empty()) throw IoError("truncated PNM header: " + path.string());
    return tok;
  };
  h.magic = next_token();
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::logic_error&) {
    throw IoError("malformed PNM header: " + path.string());
  }
  ++pos;  // single whitespace byte before the raster
  h.data_offset = pos;
  if (h.width < 1 || h.height < 1 || h.maxval < 1 || h.maxval > 255) {
    throw IoError("unsupported PNM geometry or maxval: " + path.string());
  }
  return h;
}

void write_pnm(const fs::path& path, const char* magic, int w, int h, const std::vector<unsigned char>& raster) {
  std::string header = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), raster.begin(), raster.end());
  write_bytes(path, bytes.data(), bytes.size());
}

}  // namespace

Volume3D read_volume(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw IoError("missing file: " + header_path.string());

  std::map<std::string, std::string, std::less<>> entries;
  std::string line;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ValidationError("malformed header line: " + std::string(body));
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (key.empty()) throw ValidationError("malformed header line: " + std::string(body));
    entries[key] = value;
  }

  for (const auto& [key, value] : entries) {
    if (key == "NDims" || key == "DimSize" || key == "ElementType" || key == "ElementSpacing" ||
        key == "ElementDataFile") {
      continue;
    }
    if ((key == "BinaryDataByteOrderMSB" || key == "ByteOrderMSB")) {
      if (value != "False") throw ValidationError("malformed header key " + key + ": only little-endian supported");
      continue;
    }
    if (key == "CompressedData") {
      if (value != "False") throw ValidationError("malformed header key CompressedData: compression unsupported");
      continue;
    }
    if (!is_ignorable_key(key)) throw ValidationError("malformed header key: unknown key " + key);
  }

  auto require = [&](const std::string& key) -> const std::string& {
    auto it = entries.find(key);
    if (it == entries.end()) throw ValidationError("malformed header key: missing " + key);
    return it->second;
  };

  const int ndims = parse_number<int>(require("NDims"), "NDims");
  if (ndims != 2 && ndims != 3) throw ValidationError("malformed header key NDims: must be 2 or 3");

  const auto dim_tokens = split_ws(require("DimSize"));
  if (static_cast<int>(dim_tokens.size()) != ndims) {
    throw ValidationError("malformed header key DimSize: expected " + std::to_string(ndims) + " values");
  }
  std::array<int, 3> dims{1, 1, 1};
  for (int i = 0; i < ndims; ++i) {
    dims[i] = parse_number<int>(dim_tokens[i], "DimSize");
    if (dims[i] < 0) throw ValidationError("malformed header key DimSize: negative extent");
  }

  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  if (auto it = entries.find("ElementSpacing"); it != entries.end()) {
    const auto tokens = split_ws(it->second);
    if (static_cast<int>(tokens.size()) != ndims) {
      throw ValidationError("malformed header key ElementSpacing: expected " + std::to_string(ndims) + " values");
    }
    for (int i = 0; i < ndims; ++i) {
      spacing[i] = parse_number<double>(tokens[i], "ElementSpacing");
      if (!(spacing[i] > 0)) throw ValidationError("malformed header key ElementSpacing: must be positive");
    }
  }

  const ElementType type = parse_element_type(require("ElementType"));
  const fs::path raw_path = header_path.parent_path() / require("ElementDataFile");
  if (!fs::exists(raw_path)) throw IoError("missing file: " + raw_path.string());
  const auto bytes = read_bytes(raw_path);

  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const std::size_t expected = count * element_bytes(type);
  if (bytes.size() != expected) {
    throw ValidationError("payload size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()));
  }

  std::vector<double> values(count);
  const std::size_t stride = element_bytes(type);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = bytes.data() + i * stride;
    switch (type) {
      case ElementType::uint8:
        values[i] = p[0];
        break;
      case ElementType::int16:
        values[i] = load_le<std::int16_t>(p);
        break;
      case ElementType::uint16:
        values[i] = load_le<std::uint16_t>(p);
        break;
      case ElementType::float32:
        values[i] = load_le<float>(p);
        break;
    }
  }
  return Volume3D(dims[0], dims[1], dims[2], std::move(values), {spacing[0], spacing[1], spacing[2]});
}

namespace {

void write_mhd(const fs::path& header_path, int ndims, std::array<int, 3> dims, std::array<double, 3> spacing,
               const std::vector<double>& values) {
  fs::path raw_path = header_path;
  raw_path.replace_extension(".raw");

  std::vector<unsigned char> payload;
  payload.reserve(values.size() * 4);
  for (double v : values) store_le(static_cast<float>(v), payload);

  std::ostringstream header;
  header << "NDims = " << ndims << "\nDimSize =";
  for (int i = 0; i < ndims; ++i) header << ' ' << dims[i];
  header << "\nElementType = float32\nElementSpacing =";
  for (int i = 0; i < ndims; ++i) header << ' ' << format_double(spacing[i]);
  header << "\nElementDataFile = " << raw_path.filename().string() << "\n";
  const std::string text = header.str();

  write_bytes(raw_path, payload.data(), payload.size());
  write_bytes(header_path, text.data(), text.size());
}

}  // namespace

void write_volume(const Volume3D& vol, const fs::path& header_path) {
  if (vol.values().empty()) throw ValidationError("empty volume");
  write_mhd(header_path, 3, {vol.width(), vol.height(), vol.depth()},
            {vol.spacing().x, vol.spacing().y, vol.spacing().z}, vol.values());
}

ScalarImage2D read_image(const fs::path& header_path) {
  const Volume3D vol = read_volume(header_path);
  if (vol.depth() != 1) throw ValidationError("expected a 2-D image in " + header_path.string());
  return extract_slice(vol, 0);
}

void write_image(const ScalarImage2D& img, const fs::path& header_path) {
  write_mhd(header_path, 2, {img.width(), img.height(), 1}, {img.spacing().x, img.spacing().y, 1.0}, img.values());
}

void write_pgm(const BinaryMask2D& mask, const fs::path& path) {
  std::vector<unsigned char> raster(mask.size());
  std::transform(mask.labels().begin(), mask.labels().end(), raster.begin(),
                 [](std::uint8_t l) { return static_cast<unsigned char>(l ? 255 : 0); });
  write_pnm(path, "P5", mask.width(), mask.height(), raster);
}

void write_pgm(const ScalarImage2D& unit_image, const fs::path& path) {
  std::vector<unsigned char> raster(unit_image.size());
  std::transform(unit_image.values().begin(), unit_image.values().end(), raster.begin(), [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  write_pnm(path, "P5", unit_image.width(), unit_image.height(), raster);
}

BinaryMask2D read_pgm_mask(const fs::path& path) {
  const auto bytes = read_bytes(path);
  const PnmHeader h = parse_pnm_header(bytes, path);
  if (h.magic != "P5") throw IoError("not a binary PGM: " + path.string());
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + n) throw IoError("truncated PGM raster: " + path.string());
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = bytes[h.data_offset + i] != 0 ? 1 : 0;
  return BinaryMask2D(h.width, h.height, std::move(labels));
}

void write_ppm(const RgbImage2D& img, const fs::path& path) {
  const std::size_t n = img.red().size();
  std::vector<unsigned char> raster(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    raster[3 * i] = img.red()[i];
    raster[3 * i + 1] = img.green()[i];
    raster[3 * i + 2] = img.blue()[i];
  }
  write_pnm(path, "P6", img.width(), img.height(), raster);
}

RgbImage2D read_ppm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  const PnmHeader h = parse_pnm_header(bytes, path);
  if (h.magic != "P6") throw IoError("not a binary PPM: " + path.string());
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + 3 * n) throw IoError("truncated PPM raster: " + path.string());
  std::vector<std::uint8_t> r(n), g(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = bytes[h.data_offset + 3 * i];
    g[i] = bytes[h.data_offset + 3 * i + 1];
    b[i] = bytes[h.data_offset + 3 * i + 2];
  }
  return RgbImage2D(h.width, h.height, std::move(r), std::move(g), std::move(b));
}

}  // namespace pseg
