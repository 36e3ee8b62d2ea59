#include "featureness/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace featureness {

namespace {

uint8_t to_byte(float v) {
  float s = v * 255.0f + 0.5f;
  if (s < 0.0f) s = 0.0f;
  if (s > 255.0f) s = 255.0f;
  return static_cast<uint8_t>(s);
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// Reads any supported PNG into 8-bit rows with the requested channel count
// (1 = gray, 3 = rgb), applying libpng's expansion/strip transforms.
std::vector<uint8_t> read_png_raw(const std::string& path, int want_channels, int* out_w,
                                  int* out_h) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open PNG for reading: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path);
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("corrupt PNG file: " + path);
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (want_channels == 1) {
    if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
        color_type == PNG_COLOR_TYPE_PALETTE) {
      // Rec.601 coefficients, matching to_gray().
      png_set_rgb_to_gray_fixed(png, 1, 29900, 58700);
    }
  } else {
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_gray_to_rgb(png);
    }
  }
  png_read_update_info(png, info);

  std::vector<uint8_t> pixels(static_cast<size_t>(w) * h * want_channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = pixels.data() + static_cast<size_t>(y) * w * want_channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  *out_w = static_cast<int>(w);
  *out_h = static_cast<int>(h);
  return pixels;
}

void write_png_raw(const std::string& path, const uint8_t* pixels, int w, int h, int channels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open PNG for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed: " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) {
    rows[y] = const_cast<png_bytep>(pixels + static_cast<size_t>(y) * w * channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const Image& img) {
  std::vector<uint8_t> bytes(img.size());
  for (size_t i = 0; i < img.size(); ++i) bytes[i] = to_byte(img.data[i]);
  write_png_raw(path, bytes.data(), img.width, img.height, 1);
}

Image read_png_gray(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> bytes = read_png_raw(path, 1, &w, &h);
  Image img(h, w);
  for (size_t i = 0; i < img.size(); ++i) img.data[i] = bytes[i] / 255.0f;
  return img;
}

void write_png_rgb(const std::string& path, const RgbImage& img) {
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) bytes[i] = to_byte(img.data[i]);
  write_png_raw(path, bytes.data(), img.width, img.height, 3);
}

RgbImage read_png_rgb(const std::string& path) {
  int w = 0, h = 0;
  const std::vector<uint8_t> bytes = read_png_raw(path, 3, &w, &h);
  RgbImage img(h, w);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0f;
  return img;
}

void write_pgm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open PGM for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> bytes(img.size());
  for (size_t i = 0; i < img.size(); ++i) bytes[i] = to_byte(img.data[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!out) throw std::runtime_error("PGM write failed: " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open PGM for reading: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("not a binary PGM (P5): " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw std::runtime_error("unsupported PGM header: " + path);
  }
  in.get();  // single whitespace after header
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("truncated PGM file: " + path);
  Image img(h, w);
  for (size_t i = 0; i < img.size(); ++i) img.data[i] = bytes[i] / float(maxval);
  return img;
}

Image load_image_gray(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".pgm" || ext == ".PGM") return read_pgm(path);
  return read_png_gray(path);
}

}  // namespace featureness
