#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "hybridreg/raster.hpp"

namespace hybridreg {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void png_error_to_longjmp(png_structp png, png_const_charp) {
  longjmp(png_jmpbuf(png), 1);
}
void png_warning_ignore(png_structp, png_const_charp) {}

GrayImage load_png_file(FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_to_longjmp, png_warning_ignore);
  if (!png) throw IoError("load_image: png init failed: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("load_image: png init failed: " + path);
  }

  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  int channels = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("load_image: corrupt or unsupported PNG: " + path);
  }

  png_init_io(png, f);
  png_read_info(png, info);

  int bit_depth = 0, color_type = 0;
  png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("load_image: unsupported PNG channel layout: " + path);
  }

  const size_t stride = static_cast<size_t>(w) * channels;
  pixels.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  const double inv = 1.0 / 255.0;
  for (png_uint_32 y = 0; y < h; ++y) {
    const png_byte* row = pixels.data() + y * stride;
    for (png_uint_32 x = 0; x < w; ++x) {
      double v;
      if (channels == 1) {
        v = row[x] * inv;
      } else {
        const png_byte* p = row + 3 * x;
        v = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) * inv;
      }
      img.at(static_cast<int>(x), static_cast<int>(y)) = std::min(1.0, std::max(0.0, v));
    }
  }
  return img;
}

// Binary PGM (P5), maxval <= 255 or <= 65535.
GrayImage load_pgm_file(FILE* f, const std::string& path) {
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    for (;;) {
      c = std::fgetc(f);
      if (c == EOF) throw FormatError("load_image: truncated PGM header: " + path);
      if (c == '#') {
        while (c != '\n' && c != EOF) c = std::fgetc(f);
        continue;
      }
      if (!std::isspace(c)) break;
    }
    while (c != EOF && !std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      c = std::fgetc(f);
    }
    return tok;
  };

  if (next_token() != "P5") throw FormatError("load_image: not a binary PGM: " + path);
  long w, h, maxval;
  try {
    w = std::stol(next_token());
    h = std::stol(next_token());
    maxval = std::stol(next_token());
  } catch (const std::exception&) {
    throw FormatError("load_image: malformed PGM header: " + path);
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
    throw FormatError("load_image: malformed PGM header: " + path);

  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * bytes);
  if (std::fread(buf.data(), 1, buf.size(), f) != buf.size())
    throw FormatError("load_image: truncated PGM data: " + path);

  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  const double inv = 1.0 / maxval;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const size_t i = (static_cast<size_t>(y) * w + x) * bytes;
      const unsigned val = bytes == 1 ? buf[i] : (buf[i] << 8) | buf[i + 1];
      img.at(static_cast<int>(x), static_cast<int>(y)) = val * inv;
    }
  }
  return img;
}

}  // namespace

GrayImage load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("load_image: cannot open " + path);
  unsigned char magic[8] = {0};
  const size_t got = std::fread(magic, 1, 8, f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png_file(f.get(), path);
  if (got >= 2 && magic[0] == 'P' && magic[1] == '5') return load_pgm_file(f.get(), path);
  throw FormatError("load_image: not a PNG or binary PGM: " + path);
}

void save_png(const GrayImage& img, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("save_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_to_longjmp, png_warning_ignore);
  if (!png) throw IoError("save_png: png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("save_png: png init failed");
  }

  std::vector<png_byte> row(img.width());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("save_png: write failed: " + path);
  }

  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::min(1.0, std::max(0.0, img.at(x, y)));
      row[x] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_pgm(const GrayImage& img, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("save_pgm: cannot open " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", img.width(), img.height());
  std::vector<unsigned char> row(img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::min(1.0, std::max(0.0, img.at(x, y)));
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size())
      throw IoError("save_pgm: short write: " + path);
  }
}

}  // namespace hybridreg
