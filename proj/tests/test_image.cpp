#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dipstop/image.hpp"
#include "dipstop/image_io.hpp"
#include "support/oracles.hpp"
#include "support/tmp.hpp"

using namespace dipstop;

namespace {

const std::string kTmp = testutil::scratch_dir("test_image");

// Writes a PNG straight through libpng, bypassing save_image, so the loader
// is exercised against externally produced bytes (any depth / color type).
void write_png(const std::string& path, int w, int h, int bit_depth, int color_type,
               const std::vector<unsigned char>& bytes) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  REQUIRE(png != nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(info != nullptr);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  REQUIRE(bytes.size() == rowbytes * static_cast<size_t>(h));
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(bytes.data()) + rowbytes * static_cast<size_t>(y);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

TEST_CASE("all-black and all-white grayscale decode to 0 and 1") {
  write_png(kTmp + "/black.png", 2, 2, 8, PNG_COLOR_TYPE_GRAY, {0, 0, 0, 0});
  const Image b = load_image(kTmp + "/black.png");
  CHECK(b.channels == 1);
  CHECK(b.height == 2);
  CHECK(b.width == 2);
  CHECK((b.data == 0.0).all());

  write_png(kTmp + "/white.png", 2, 2, 8, PNG_COLOR_TYPE_GRAY, {255, 255, 255, 255});
  const Image w = load_image(kTmp + "/white.png");
  CHECK((w.data == 1.0).all());
}

TEST_CASE("8-bit samples decode to v/255 per channel") {
  write_png(kTmp + "/rgb.png", 2, 1, 8, PNG_COLOR_TYPE_RGB, {10, 20, 30, 200, 150, 100});
  const Image img = load_image(kTmp + "/rgb.png");
  REQUIRE(img.channels == 3);
  CHECK(img(0, 0, 0) == 10.0 / 255.0);
  CHECK(img(1, 0, 0) == 20.0 / 255.0);
  CHECK(img(2, 0, 0) == 30.0 / 255.0);
  CHECK(img(0, 0, 1) == 200.0 / 255.0);
  CHECK(img(1, 0, 1) == 150.0 / 255.0);
  CHECK(img(2, 0, 1) == 100.0 / 255.0);
}

TEST_CASE("16-bit grayscale decodes to v/65535") {
  // Samples 0, 1, 32768, 65535, big-endian as PNG stores them.
  write_png(kTmp + "/g16.png", 2, 2, 16, PNG_COLOR_TYPE_GRAY,
            {0x00, 0x00, 0x00, 0x01, 0x80, 0x00, 0xff, 0xff});
  const Image img = load_image(kTmp + "/g16.png");
  REQUIRE(img.channels == 1);
  CHECK(img(0, 0, 0) == 0.0);
  CHECK(img(0, 0, 1) == 1.0 / 65535.0);
  CHECK(img(0, 1, 0) == 32768.0 / 65535.0);
  CHECK(img(0, 1, 1) == 1.0);
}

TEST_CASE("alpha is dropped on load") {
  write_png(kTmp + "/rgba.png", 1, 1, 8, PNG_COLOR_TYPE_RGB_ALPHA, {10, 20, 30, 77});
  const Image img = load_image(kTmp + "/rgba.png");
  REQUIRE(img.channels == 3);
  CHECK(img(0, 0, 0) == 10.0 / 255.0);
  CHECK(img(1, 0, 0) == 20.0 / 255.0);
  CHECK(img(2, 0, 0) == 30.0 / 255.0);
}

TEST_CASE("save quantizes by round(clamp(v, 0, 1) * 255)") {
  Image img(1, 2, 2);
  img(0, 0, 0) = 0.5;    // 127.5 rounds to 128
  img(0, 0, 1) = -0.1;   // clamps to 0
  img(0, 1, 0) = 1.2;    // clamps to 255
  img(0, 1, 1) = 0.55;   // 140.25 rounds to 140
  save_image(img, kTmp + "/quant.png");
  const Image back = load_image(kTmp + "/quant.png");
  CHECK(back(0, 0, 0) == 128.0 / 255.0);
  CHECK(back(0, 0, 1) == 0.0);
  CHECK(back(0, 1, 0) == 1.0);
  CHECK(back(0, 1, 1) == 140.0 / 255.0);
}

TEST_CASE("round trip is exact on the quantized grid") {
  Image img = oracle::random_image(3, 8, 8, 11);
  for (Eigen::Index i = 0; i < img.size(); ++i)
    img.data[i] = std::round(img.data[i] * 255.0) / 255.0;
  save_image(img, kTmp + "/grid.png");
  const Image back = load_image(kTmp + "/grid.png");
  REQUIRE(back.same_shape(img));
  CHECK((back.data == img.data).all());
}

TEST_CASE("round trip stays within half a quantization step") {
  const Image img = oracle::random_image(3, 16, 16, 12);
  save_image(img, kTmp + "/half.png");
  const Image back = load_image(kTmp + "/half.png");
  CHECK((back.data - img.data).abs().maxCoeff() <= 1.0 / 510.0 + 1e-12);
}

TEST_CASE("decode and io failures carry distinct error types") {
  std::ofstream(kTmp + "/garbage.png") << "this is not a png";
  CHECK_THROWS_AS(load_image(kTmp + "/garbage.png"), DecodeError);

  save_image(oracle::random_image(1, 8, 8, 13), kTmp + "/whole.png");
  const std::string whole = oracle::slurp(kTmp + "/whole.png");
  std::ofstream(kTmp + "/truncated.png", std::ios::binary)
      << whole.substr(0, whole.size() / 2);
  CHECK_THROWS_AS(load_image(kTmp + "/truncated.png"), DecodeError);

  CHECK_THROWS_AS(load_image(kTmp + "/missing.png"), IoError);

  CHECK_THROWS_AS(save_image(Image(2, 4, 4), kTmp + "/two.png"), InvalidArgument);
  Image bad(1, 2, 2);
  bad(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(save_image(bad, kTmp + "/nan.png"), InvalidArgument);
}

TEST_CASE("psnr sentinel and uniform-error examples") {
  const Image a = oracle::random_image(3, 8, 8, 21);
  CHECK(psnr(a, a) == kPsnrPerfect);

  Image zero(1, 4, 4);
  Image d1 = zero;
  d1.data.setConstant(0.1);
  CHECK(psnr(zero, d1) == doctest::Approx(20.0).epsilon(1e-12));
  Image d5 = zero;
  d5.data.setConstant(0.5);
  CHECK(psnr(zero, d5) == doctest::Approx(6.0205999132796239).epsilon(1e-12));
}

TEST_CASE("psnr is symmetric bit for bit") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image a = oracle::random_image(3, 6, 6, 100 + s);
    const Image b = oracle::random_image(3, 6, 6, 200 + s);
    CHECK(psnr(a, b) == psnr(b, a));
  }
}

TEST_CASE("psnr strictly decreases as uniform error grows") {
  const Image a = oracle::random_image(1, 8, 8, 31, 0.2, 0.4);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 50; ++k) {
    Image b = a;
    b.data += 0.01 * k;
    const double p = psnr(a, b);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("psnr rejects shape mismatches") {
  const Image a(1, 4, 4), b(1, 4, 5), c(3, 4, 4);
  CHECK_THROWS_AS(psnr(a, b), InvalidArgument);
  CHECK_THROWS_AS(psnr(a, c), InvalidArgument);
}

TEST_CASE("minmax normalization endpoints and degenerate input") {
  const std::vector<double> v{2.0, 4.0, 6.0};
  const std::vector<double> n = minmax_normalize(v);
  CHECK(n == std::vector<double>{0.0, 0.5, 1.0});

  const std::vector<double> flat{5.0, 5.0, 5.0};
  CHECK(minmax_normalize(flat) == std::vector<double>{0.0, 0.0, 0.0});

  CHECK_THROWS_AS(minmax_normalize(std::vector<double>{1.0}), InvalidArgument);
}

TEST_CASE("minmax normalization preserves the argmax") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(64);
    for (double& x : v) x = rng.normal(0.0, 3.0);
    const std::vector<double> n = minmax_normalize(v);
    CHECK(oracle::argmax_earliest(v) == oracle::argmax_earliest(n));
    CHECK(n[static_cast<size_t>(oracle::argmax_earliest(n))] == 1.0);
  }
}

TEST_CASE("image and mask shape validation") {
  CHECK_THROWS_AS(Image(0, 2, 2), InvalidArgument);
  CHECK_THROWS_AS(Image(1, -1, 2), InvalidArgument);
  CHECK_THROWS_AS(Mask(0, 3), InvalidArgument);

  Mask m(2, 2);
  CHECK_THROWS_AS(m.validate(), InvalidArgument);  // all zero
  m(0, 0) = 0.5;
  CHECK_THROWS_AS(m.validate(), InvalidArgument);  // not binary
  m(0, 0) = 1.0;
  m.validate();
  CHECK(m.ones_count() == 1);
}

TEST_CASE("masks round trip through png and reject gray levels") {
  Mask m(4, 4);
  Rng rng(5);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) m(y, x) = rng.uniform01() < 0.5 ? 0.0 : 1.0;
  m(0, 0) = 1.0;
  save_mask(m, kTmp + "/mask.png");
  const Mask back = load_mask(kTmp + "/mask.png");
  CHECK((back.data == m.data).all());

  write_png(kTmp + "/gray_mask.png", 2, 1, 8, PNG_COLOR_TYPE_GRAY, {128, 255});
  CHECK_THROWS_AS(load_mask(kTmp + "/gray_mask.png"), DecodeError);

  // Channels must agree for an RGB mask.
  write_png(kTmp + "/rgb_mask.png", 1, 1, 8, PNG_COLOR_TYPE_RGB, {255, 0, 255});
  CHECK_THROWS_AS(load_mask(kTmp + "/rgb_mask.png"), DecodeError);
}
