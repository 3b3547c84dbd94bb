#pragma once

// 8-bit raster I/O: PNG (libpng), JPEG (libjpeg) and binary PPM/PGM.
// Grayscale inputs are replicated to three channels; alpha is dropped.

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>

#include "dists/errors.hpp"
#include "dists/image.hpp"

namespace dists {

namespace detail {

inline std::string lower_extension(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

inline Image from_interleaved(const unsigned char* px, int h, int w, int comps) {
  Image im(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src = comps >= 3 ? c : 0;
        im(c, y, x) = px[(static_cast<std::size_t>(y) * w + x) * comps + src] / 255.0f;
      }
  return im;
}

inline std::vector<unsigned char> to_interleaved(const Image& im) {
  std::vector<unsigned char> px(static_cast<std::size_t>(im.height()) * im.width() * 3);
  for (int y = 0; y < im.height(); ++y)
    for (int x = 0; x < im.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(im(c, y, x), 0.0f, 1.0f);
        px[(static_cast<std::size_t>(y) * im.width() + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  return px;
}

inline Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IngestionError("cannot read PNG " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IngestionError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  return from_interleaved(buf.data(), static_cast<int>(img.height), static_cast<int>(img.width), 3);
}

inline void write_png(const std::filesystem::path& path, const Image& im) {
  auto px = to_interleaved(im);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(im.width());
  img.height = static_cast<png_uint_32>(im.height());
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, px.data(), 0, nullptr))
    throw IngestionError("cannot write PNG " + path.string() + ": " + img.message);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

inline void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

inline Image read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) throw IngestionError("cannot open " + path.string());
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  std::vector<unsigned char> buf;
  int h = 0, w = 0, comps = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IngestionError("cannot decode JPEG " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);
  h = static_cast<int>(cinfo.output_height);
  w = static_cast<int>(cinfo.output_width);
  comps = cinfo.output_components;
  buf.resize(static_cast<std::size_t>(h) * w * comps);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * comps;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(buf.data(), h, w, comps);
}

inline void write_jpeg(const std::filesystem::path& path, const Image& im, int quality) {
  auto px = to_interleaved(im);
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw IngestionError("cannot write " + path.string());
  jpeg_compress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw IngestionError("cannot encode JPEG " + path.string());
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(im.width());
  cinfo.image_height = static_cast<JDIMENSION>(im.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.next_scanline) * im.width() * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestionError("cannot open " + path.string());
  std::string magic;
  f >> magic;
  const auto next_int = [&] {
    f >> std::ws;
    while (f.peek() == '#') {
      std::string line;
      std::getline(f, line);
      f >> std::ws;
    }
    int v = 0;
    f >> v;
    return v;
  };
  if (magic != "P6" && magic != "P5") throw IngestionError(path.string() + ": only binary P5/P6 are supported");
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (!f || w <= 0 || h <= 0 || maxval != 255) throw IngestionError(path.string() + ": bad PNM header");
  f.get();
  const int comps = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * comps);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IngestionError(path.string() + ": truncated PNM data");
  return from_interleaved(buf.data(), h, w, comps);
}

inline void write_ppm(const std::filesystem::path& path, const Image& im) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IngestionError("cannot write " + path.string());
  f << "P6\n" << im.width() << " " << im.height() << "\n255\n";
  auto px = to_interleaved(im);
  f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

}  // namespace detail

/// Reads an 8-bit PNG, JPEG or binary PPM/PGM into [0, 1] floats.
inline Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IngestionError("no such image: " + path.string());
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return detail::read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return detail::read_jpeg(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::read_pnm(path);
  throw IngestionError("unsupported image format: " + path.string());
}

/// Writes by extension (.png, .jpg/.jpeg, .ppm), quantizing to 8 bits.
inline void write_image(const std::filesystem::path& path, const Image& im, int jpeg_quality = 90) {
  require_rgb(im, "write_image");
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return detail::write_png(path, im);
  if (ext == ".jpg" || ext == ".jpeg") return detail::write_jpeg(path, im, jpeg_quality);
  if (ext == ".ppm") return detail::write_ppm(path, im);
  throw IngestionError("unsupported output format: " + path.string());
}

/// Rounds to the 8-bit grid that write_image would store.
inline Image quantize8(const Image& im) {
  Image out = im;
  for (float& v : out.values()) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  return out;
}

}  // namespace dists
