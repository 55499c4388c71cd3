#include "dipstop/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace dipstop {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_fn(png_structp png, png_const_charp msg) {
  // Stash the message, then longjmp back to the caller-side setjmp point.
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = msg ? msg : "unknown libpng error";
  png_longjmp(png, 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

}  // namespace

Image load_image(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw DecodeError("not a PNG file: " + path);

  std::string errmsg;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_fn, png_warn_fn);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  std::vector<png_byte> raw;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("PNG decode failed (" + errmsg + "): " + path);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  // Normalize to 8/16-bit gray or RGB; raw stored values, no gamma decode.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int ch = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);

  if ((ch != 1 && ch != 3) || (out_depth != 8 && out_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("unsupported PNG layout (channels=" + std::to_string(ch) +
                      ", depth=" + std::to_string(out_depth) + "): " + path);
  }

  const size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * static_cast<size_t>(h));
  row_ptrs.resize(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = raw.data() + rowbytes * static_cast<size_t>(y);
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(ch, h, w);
  if (out_depth == 8) {
    for (int y = 0; y < h; ++y) {
      const png_byte* row = raw.data() + rowbytes * static_cast<size_t>(y);
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c)
          img(c, y, x) = row[x * ch + c] / 255.0;
    }
  } else {
    // PNG stores 16-bit samples big-endian.
    for (int y = 0; y < h; ++y) {
      const png_byte* row = raw.data() + rowbytes * static_cast<size_t>(y);
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c) {
          const size_t off = (static_cast<size_t>(x) * ch + c) * 2;
          const unsigned v = (unsigned(row[off]) << 8) | row[off + 1];
          img(c, y, x) = v / 65535.0;
        }
    }
  }
  if (!img.all_finite()) throw DecodeError("decoded non-finite pixel values: " + path);
  return img;
}

void save_image(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw InvalidArgument("save_image: only 1- or 3-channel images");
  if (!img.all_finite()) throw InvalidArgument("save_image: non-finite pixel values");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);

  std::string errmsg;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &errmsg, png_error_fn, png_warn_fn);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  const int h = img.height, w = img.width, ch = img.channels;
  std::vector<png_byte> raw(static_cast<size_t>(h) * w * ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double v = std::clamp(img(c, y, x), 0.0, 1.0);
        raw[(static_cast<size_t>(y) * w + x) * ch + c] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }

  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y)
    row_ptrs[y] = raw.data() + static_cast<size_t>(y) * w * ch;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed (" + errmsg + "): " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8,
               ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Mask load_mask(const std::string& path) {
  const Image img = load_image(path);
  Mask m(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v0 = img(0, y, x);
      for (int c = 1; c < img.channels; ++c)
        if (img(c, y, x) != v0)
          throw DecodeError("mask channels disagree at (" + std::to_string(y) + "," +
                            std::to_string(x) + "): " + path);
      if (v0 == 0.0)
        m(y, x) = 0.0;
      else if (v0 == 1.0)
        m(y, x) = 1.0;
      else
        throw DecodeError("mask pixels must be 0 or 255: " + path);
    }
  m.validate();
  return m;
}

void save_mask(const Mask& m, const std::string& path) {
  m.validate();
  Image img(1, m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) img(0, y, x) = m(y, x);
  save_image(img, path);
}

}  // namespace dipstop
