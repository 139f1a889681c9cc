#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pseg/error.hpp"
#include "pseg/image_io.hpp"
#include "pseg/imaging.hpp"

using namespace pseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pseg_imaging_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> float_bytes(const std::vector<float>& v) {
  std::vector<unsigned char> out(v.size() * 4);
  std::memcpy(out.data(), v.data(), out.size());  // test host is little-endian
  return out;
}

Volume3D random_volume(int w, int h, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1000.0f, 3000.0f);
  std::vector<double> v(static_cast<std::size_t>(w) * h * d);
  for (double& x : v) x = u(rng);  // float32-representable
  return Volume3D(w, h, d, std::move(v), {0.7, 0.7, 2.5});
}

// Brute-force boundary: foreground with a 4-neighbour that is background or
// outside the image.
std::size_t boundary_count(const BinaryMask2D& m) {
  std::size_t n = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y)) continue;
      const int dx[] = {1, -1, 0, 0};
      const int dy[] = {0, 0, 1, -1};
      bool edge = false;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height() || !m.at(nx, ny)) edge = true;
      }
      if (edge) ++n;
    }
  return n;
}

}  // namespace

TEST_CASE("value types validate their invariants") {
  CHECK_THROWS_AS(ScalarImage2D(2, 2, std::vector<double>(3)), ValidationError);
  CHECK_THROWS_AS(ScalarImage2D(0, 2), ValidationError);
  CHECK_THROWS_AS(ScalarImage2D(1, 1, std::vector<double>{std::nan("")}), ValidationError);
  CHECK_THROWS_AS(ScalarImage2D(1, 1, std::vector<double>{0.0}, {0.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(BinaryMask2D(1, 2, std::vector<std::uint8_t>{0, 2}), ValidationError);
  CHECK_THROWS_AS(Volume3D(2, 2, 1, std::vector<double>(3)), ValidationError);
  CHECK(BinaryMask2D(2, 2, {1, 0, 1, 1}).foreground_count() == 3);
}

TEST_CASE("read_volume parses a float32 2x2x2 payload") {
  const fs::path dir = temp_dir("read");
  write_text(dir / "v.mhd",
             "NDims = 3\nDimSize = 2 2 2\nElementType = float32\nElementSpacing = 0.5 0.5 2\nElementDataFile = v.raw\n");
  write_bytes(dir / "v.raw", float_bytes({0, 1, 2, 3, 4, 5, 6, 7}));
  const Volume3D v = read_volume(dir / "v.mhd");
  CHECK(v.width() == 2);
  CHECK(v.height() == 2);
  CHECK(v.depth() == 2);
  CHECK(v.values() == std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(v.spacing().z == 2.0);
}

TEST_CASE("read_volume integer element types") {
  const fs::path dir = temp_dir("ints");
  write_text(dir / "a.mhd", "NDims = 2\nDimSize = 2 1\nElementType = int16\nElementDataFile = a.raw\n");
  write_bytes(dir / "a.raw", {0x18, 0xfc, 0x2c, 0x01});  // -1000, 300
  CHECK(read_volume(dir / "a.mhd").values() == std::vector<double>{-1000, 300});
  write_text(dir / "b.mhd", "NDims = 2\nDimSize = 3 1\nElementType = MET_UCHAR\nElementDataFile = b.raw\n");
  write_bytes(dir / "b.raw", {0, 7, 255});
  CHECK(read_volume(dir / "b.mhd").values() == std::vector<double>{0, 7, 255});
  write_text(dir / "c.mhd", "NDims = 2\nDimSize = 1 1\nElementType = uint16\nElementDataFile = c.raw\n");
  write_bytes(dir / "c.raw", {0x34, 0x12});
  CHECK(read_volume(dir / "c.mhd").values() == std::vector<double>{0x1234});
}

TEST_CASE("read_volume errors") {
  const fs::path dir = temp_dir("errors");
  write_text(dir / "v.mhd", "NDims = 3\nDimSize = 4 4 4\nElementType = float32\nElementDataFile = v.raw\n");
  write_bytes(dir / "v.raw", std::vector<unsigned char>(100));
  CHECK_THROWS_WITH_AS(read_volume(dir / "v.mhd"), doctest::Contains("payload size mismatch: expected 256 bytes"),
                       ValidationError);

  CHECK_THROWS_AS(read_volume(dir / "absent.mhd"), IoError);
  write_text(dir / "noraw.mhd", "NDims = 2\nDimSize = 1 1\nElementType = float32\nElementDataFile = gone.raw\n");
  CHECK_THROWS_AS(read_volume(dir / "noraw.mhd"), IoError);

  write_text(dir / "t.mhd", "NDims = 2\nDimSize = 1 1\nElementType = float64\nElementDataFile = v.raw\n");
  CHECK_THROWS_WITH_AS(read_volume(dir / "t.mhd"), doctest::Contains("unsupported ElementType"), ValidationError);

  write_text(dir / "k.mhd", "NDims = 2\nDimSize = 1 1\nColour = blue\nElementType = float32\nElementDataFile = v.raw\n");
  CHECK_THROWS_WITH_AS(read_volume(dir / "k.mhd"), doctest::Contains("malformed header key"), ValidationError);

  write_text(dir / "d.mhd", "NDims = 3\nDimSize = 1 x 1\nElementType = float32\nElementDataFile = v.raw\n");
  CHECK_THROWS_WITH_AS(read_volume(dir / "d.mhd"), doctest::Contains("malformed header key DimSize"), ValidationError);
}

TEST_CASE("write_volume round trip") {
  const fs::path dir = temp_dir("roundtrip");
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Volume3D v = random_volume(3 + trial, 2 + trial % 2, 1 + trial, rng);
    write_volume(v, dir / "r.mhd");
    CHECK(read_volume(dir / "r.mhd") == v);
  }
  Volume3D odd(2, 1, 1, {1.5, -2.25}, {0.1, 1.0 / 3.0, 2.0000000000000004});
  write_volume(odd, dir / "s.mhd");
  const Volume3D back = read_volume(dir / "s.mhd");
  CHECK(back.spacing().x == 0.1);
  CHECK(back.spacing().y == 1.0 / 3.0);
  CHECK(back.spacing().z == 2.0000000000000004);

  write_volume(Volume3D(1, 1, 1, {0.0}), dir / "one.mhd");
  CHECK(fs::file_size(dir / "one.raw") == 4);
  CHECK_THROWS_WITH_AS(write_volume(Volume3D(2, 2, 0, {}), dir / "e.mhd"), "empty volume", ValidationError);

  // Overwrites.
  write_volume(Volume3D(1, 1, 1, {9.0}), dir / "one.mhd");
  CHECK(read_volume(dir / "one.mhd").values() == std::vector<double>{9.0});

  ScalarImage2D img(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6}, {0.5, 0.25});
  write_image(img, dir / "img.mhd");
  CHECK(read_image(dir / "img.mhd") == img);
}

TEST_CASE("extract_slice") {
  std::vector<double> v(12);
  for (int i = 0; i < 12; ++i) v[i] = i;
  Volume3D vol(2, 2, 3, v, {0.5, 0.75, 3.0});
  const ScalarImage2D s = extract_slice(vol, 1);
  CHECK(s.values() == std::vector<double>{4, 5, 6, 7});
  CHECK(s.spacing().x == 0.5);
  CHECK(s.spacing().y == 0.75);
  CHECK_THROWS_AS(extract_slice(vol, 3), std::out_of_range);
  CHECK_THROWS_AS(extract_slice(vol, -1), std::out_of_range);

  Volume3D one(2, 2, 1, {1, 2, 3, 4});
  CHECK(extract_slice(one, 0).values() == one.values());

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Volume3D r = random_volume(1 + trial % 4, 1 + trial % 3, 1 + trial % 5, rng);
    for (int k = 0; k < r.depth(); ++k) {
      const auto sl = extract_slice(r, k);
      for (std::size_t i = 0; i < r.slice_size(); ++i) CHECK(sl.values()[i] == r.values()[k * r.slice_size() + i]);
    }
  }
}

TEST_CASE("normalize_window") {
  ScalarImage2D img(5, 1, std::vector<double>{-160, 240, 40, -260, 1000}, {0.5, 0.5});
  const ScalarImage2D n = normalize_window(img, -160, 240);
  CHECK(n.values() == std::vector<double>{0.0, 1.0, 0.5, 0.0, 1.0});
  CHECK(n.spacing().x == 0.5);
  CHECK_THROWS_AS(normalize_window(img, 1, 1), ValidationError);
  CHECK_THROWS_AS(normalize_window(img, 2, 1), ValidationError);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-500, 500);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(64);
    for (double& x : vals) x = u(rng);
    std::sort(vals.begin(), vals.end());
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    if (lo == hi) continue;
    const auto out = normalize_window(ScalarImage2D(64, 1, vals), lo, hi).values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i] >= 0.0);
      CHECK(out[i] <= 1.0);
      if (i > 0) CHECK(out[i] >= out[i - 1]);
    }
  }
}

TEST_CASE("contour") {
  BinaryMask2D single(5, 5);
  std::vector<std::uint8_t> l(25, 0);
  l[12] = 1;
  CHECK(contour(BinaryMask2D(5, 5, l)).labels() == l);
  BinaryMask2D full(3, 3, std::vector<std::uint8_t>(9, 1));
  CHECK(contour(full).foreground_count() == 8);  // outside counts as background
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto m = oracle::random_mask(6, 5, rng, 0.7);
    CHECK(contour(m).foreground_count() == boundary_count(m));
  }
}

TEST_CASE("render_overlay") {
  std::vector<double> ramp(16 * 16);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i % 16) * 10.0;
  const ScalarImage2D ct(16, 16, ramp);

  const RgbImage2D plain = render_overlay(ct, BinaryMask2D(16, 16), BinaryMask2D(16, 16));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const Rgb p = plain.at(x, y);
      CHECK(p.r == p.g);
      CHECK(p.g == p.b);
    }
  CHECK(plain.at(0, 0).r == 0);
  CHECK(plain.at(15, 0).r == 255);
  CHECK(render_overlay(ct, BinaryMask2D(16, 16), std::nullopt) == plain);

  std::vector<std::uint8_t> dot(256, 0);
  dot[7 * 16 + 7] = 1;
  const RgbImage2D d = render_overlay(ct, BinaryMask2D(16, 16, dot), std::nullopt);
  CHECK(d.at(7, 7) == Rgb{0, 255, 0});
  CHECK(d.at(8, 7) == plain.at(8, 7));

  // Disk of diameter 8.
  std::vector<std::uint8_t> disk(256, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (std::hypot(x - 7.5, y - 7.5) <= 4.0) disk[static_cast<std::size_t>(y) * 16 + x] = 1;
  const BinaryMask2D gt(16, 16, disk);
  const RgbImage2D o = render_overlay(ct, gt, gt);
  std::size_t green = 0, reddened = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const Rgb p = o.at(x, y);
      const Rgb base = plain.at(x, y);
      if (p == Rgb{0, 255, 0}) {
        ++green;
      } else if (gt.at(x, y)) {
        CHECK(p.r == (base.r + 256) / 2);
        CHECK(p.g == base.g / 2);
        CHECK(p.b == base.b / 2);
        CHECK(p.r > p.g);
        ++reddened;
      } else {
        CHECK(p == base);
      }
    }
  CHECK(green == boundary_count(gt));
  CHECK(green + reddened == gt.foreground_count());
  CHECK(reddened > 0);
  CHECK(render_overlay(ct, gt, gt) == o);
  CHECK(o.width() == 16);
  CHECK(o.height() == 16);
  CHECK_THROWS_AS(render_overlay(ct, BinaryMask2D(15, 16), std::nullopt), ValidationError);
  CHECK_THROWS_AS(render_overlay(ct, gt, BinaryMask2D(16, 15)), ValidationError);
}

TEST_CASE("pgm and ppm round trips") {
  const fs::path dir = temp_dir("pnm");
  std::mt19937_64 rng(9);
  const auto m = oracle::random_mask(7, 4, rng);
  write_pgm(m, dir / "m.pgm");
  CHECK(read_pgm_mask(dir / "m.pgm") == m);
  CHECK(fs::file_size(dir / "m.pgm") == std::string("P5\n7 4\n255\n").size() + 28);

  const RgbImage2D rgb(2, 1, {1, 2}, {3, 4}, {5, 6});
  write_ppm(rgb, dir / "o.ppm");
  CHECK(read_ppm(dir / "o.ppm") == rgb);

  write_pgm(ScalarImage2D(2, 1, std::vector<double>{0.0, 1.0}), dir / "g.pgm");
  std::ifstream in(dir / "g.pgm", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  CHECK(static_cast<unsigned char>(bytes[bytes.size() - 2]) == 0);
  CHECK(static_cast<unsigned char>(bytes.back()) == 255);

  CHECK_THROWS_AS(read_pgm_mask(dir / "o.ppm"), IoError);
  CHECK_THROWS_AS(read_pgm_mask(dir / "none.pgm"), IoError);
}
