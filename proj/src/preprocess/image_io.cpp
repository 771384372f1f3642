// SPDX-License-Identifier: Apache-2.0
#include "padmae/preprocess/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace padmae::preprocess {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageLoadError("cannot open " + path.string());
  return f;
}

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Image from_levels(std::size_t w, std::size_t h, std::size_t channels,
                  const std::vector<std::uint16_t>& levels, double maxval) {
  Image img(w, h, 3);
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = channels == 1 ? i : i * channels + c;
      img.data[i * 3 + c] = static_cast<double>(levels[src]) / maxval;
    }
  }
  return img;
}

Image load_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ImageLoadError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageLoadError("libpng init failed");
  }
  std::vector<std::uint16_t> levels;
  std::size_t w = 0, h = 0, channels = 0;
  int depth = 8;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageLoadError("corrupt PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buf(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buf.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  levels.resize(w * h * channels);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (depth == 16) {
      std::uint16_t v;
      std::memcpy(&v, buf.data() + 2 * i, 2);
      levels[i] = v;
    } else {
      levels[i] = buf[i];
    }
  }
  if (channels != 1 && channels != 3) throw ImageLoadError("unsupported PNG layout: " + path.string());
  return from_levels(w, h, channels, levels, depth == 16 ? 65535.0 : 255.0);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Image load_jpeg(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<std::uint16_t> levels;
  std::size_t w = 0, h = 0, channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageLoadError("corrupt JPEG: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);
  w = cinfo.output_width;
  h = cinfo.output_height;
  channels = static_cast<std::size_t>(cinfo.output_components);
  std::vector<unsigned char> row(w * channels);
  levels.reserve(w * h * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW rp = row.data();
    jpeg_read_scanlines(&cinfo, &rp, 1);
    levels.insert(levels.end(), row.begin(), row.end());
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (channels != 1 && channels != 3) throw ImageLoadError("unsupported JPEG layout: " + path.string());
  return from_levels(w, h, channels, levels, 255.0);
}

// Reads the next header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

Image load_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageLoadError("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  std::size_t channels = 0;
  bool binary = true;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else if (magic == "P2") channels = 1, binary = false;
  else if (magic == "P3") channels = 3, binary = false;
  else throw ImageLoadError("not a PGM/PPM file: " + path.string());
  std::size_t w = 0, h = 0;
  unsigned long maxval = 0;
  try {
    w = std::stoul(pnm_token(in));
    h = std::stoul(pnm_token(in));
    maxval = std::stoul(pnm_token(in));
  } catch (const std::exception&) {
    throw ImageLoadError("corrupt PNM header: " + path.string());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw ImageLoadError("corrupt PNM header: " + path.string());
  }
  std::vector<std::uint16_t> levels(w * h * channels);
  if (binary) {
    const bool wide = maxval > 255;
    std::vector<unsigned char> buf(levels.size() * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
      throw ImageLoadError("truncated PNM payload: " + path.string());
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
      levels[i] = wide ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]) : buf[i];
    }
  } else {
    for (auto& v : levels) {
      const std::string t = pnm_token(in);
      if (t.empty()) throw ImageLoadError("truncated PNM payload: " + path.string());
      v = static_cast<std::uint16_t>(std::stoul(t));
    }
  }
  for (auto v : levels) {
    if (v > maxval) throw ImageLoadError("PNM level above maxval: " + path.string());
  }
  return from_levels(w, h, channels, levels, static_cast<double>(maxval));
}

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png_raw(const fs::path& path, std::size_t w, std::size_t h, int color, int depth,
                   const std::vector<unsigned char>& bytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t rowbytes = w * channels * (depth == 16 ? 2 : 1);
  for (std::size_t y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + y * rowbytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

bool is_supported_image(const fs::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".pgm" || ext == ".ppm" ||
         ext == ".pnm";
}

Image load_image(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return load_jpeg(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return load_pnm(path);
  throw ImageLoadError("unsupported image format: " + path.string());
}

void save_png(const fs::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("save_png: channels must be 1 or 3");
  }
  std::vector<unsigned char> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_u8(image.data[i]);
  write_png_raw(path, image.width, image.height,
                image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, bytes);
}

void save_png_gray(const fs::path& path, std::size_t width, std::size_t height,
                   const std::vector<std::uint16_t>& levels, int bit_depth) {
  if (levels.size() != width * height) throw std::invalid_argument("save_png_gray: size mismatch");
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("save_png_gray: depth 8 or 16");
  std::vector<unsigned char> bytes;
  bytes.reserve(levels.size() * 2);
  for (std::uint16_t v : levels) {
    if (bit_depth == 16) {
      bytes.push_back(static_cast<unsigned char>(v >> 8));
      bytes.push_back(static_cast<unsigned char>(v & 0xff));
    } else {
      bytes.push_back(static_cast<unsigned char>(std::min<std::uint16_t>(v, 255)));
    }
  }
  write_png_raw(path, width, height, PNG_COLOR_TYPE_GRAY, bit_depth, bytes);
}

void save_pgm(const fs::path& path, std::size_t width, std::size_t height,
              const std::vector<std::uint16_t>& levels, std::uint16_t maxval) {
  if (levels.size() != width * height) throw std::invalid_argument("save_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << " " << height << "\n" << maxval << "\n";
  for (std::uint16_t v : levels) {
    if (maxval > 255) out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
}

void save_jpeg(const fs::path& path, const Image& image, int quality) {
  if (image.channels != 3) throw std::invalid_argument("save_jpeg: 3 channels required");
  FilePtr f = open_file(path, "wb");
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<unsigned char> row(image.width * 3);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = to_u8(image.data[y * row.size() + i]);
    JSAMPROW rp = row.data();
    jpeg_write_scanlines(&cinfo, &rp, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

Image to_rgb(const Image& image) {
  if (image.channels == 3) return image;
  if (image.channels != 1) throw std::invalid_argument("to_rgb: channels must be 1 or 3");
  Image out(image.width, image.height, 3);
  for (std::size_t i = 0; i < image.width * image.height; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.data[i * 3 + c] = image.data[i];
  return out;
}

Image to_gray(const Image& image) {
  Image out(image.width, image.height, 1);
  const std::size_t ch = image.channels;
  for (std::size_t i = 0; i < image.width * image.height; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < ch; ++c) s += image.data[i * ch + c];
    out.data[i] = s / static_cast<double>(ch);
  }
  return out;
}

}  // namespace padmae::preprocess
