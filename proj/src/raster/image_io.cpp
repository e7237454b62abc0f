#include "crownstitch/raster/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "crownstitch/error.hpp"

namespace crownstitch::raster {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure("short write to " + path.string());
}

namespace {

struct PngWriteState {
  std::vector<std::uint8_t>* out;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
  st->out->insert(st->out->end(), data, data + len);
}

void png_flush_cb(png_structp) {}

struct PngReadState {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->in.size()) png_error(png, "truncated PNG");
  std::memcpy(data, st->in.data() + st->pos, len);
  st->pos += len;
}

[[noreturn]] void png_error_cb(png_structp, png_const_charp msg) { throw RuntimeFailure(msg); }
void png_warning_cb(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValidationError("PNG encoding supports 1 or 3 channels");
  }
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ValidationError("image buffer size does not match its dimensions");
  }
  std::vector<std::uint8_t> out;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  png_infop info = png_create_info_struct(png);
  PngWriteState st{&out};
  try {
    png_set_write_fn(png, &st, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(image.pixels.data() + stride * y));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image8 decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw RuntimeFailure("not a PNG file");
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  png_infop info = png_create_info_struct(png);
  PngReadState st{bytes, 0};
  Image8 img;
  try {
    png_set_read_fn(png, &st, png_read_cb);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const Image8& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_png(image));
}

Image8 read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

Image8 to_image(const GeoRaster& raster) {
  if (raster.sample_type() != SampleType::kUInt8) {
    throw ValidationError("only 8-bit rasters convert directly to images");
  }
  if (raster.bands() != 1 && raster.bands() != 3) {
    throw ValidationError("only 1- or 3-band rasters convert to images");
  }
  const auto s = raster.u8();
  return {raster.width(), raster.height(), raster.bands(), {s.begin(), s.end()}};
}

void write_debug_dump(const GeoRaster& raster, const std::filesystem::path& stem) {
  Image8 img;
  if (raster.sample_type() == SampleType::kUInt8) {
    img = to_image(raster);
  } else {
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (float v : raster.f32()) {
      if (raster.is_nodata(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const float range = hi > lo ? hi - lo : 1.0f;
    img.width = raster.width();
    img.height = raster.height();
    img.channels = 1;
    img.pixels.reserve(raster.f32().size());
    for (float v : raster.f32()) {
      const float t = raster.is_nodata(v) ? 0.0f : (v - lo) / range;
      img.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0f, 1.0f) * 255)));
    }
  }
  std::filesystem::path png_path = stem;
  png_path += ".png";
  write_png(img, png_path);

  std::string text;
  char line[64];
  for (double v : raster.transform().to_gdal()) {
    std::snprintf(line, sizeof(line), "%.17g\n", v);
    text += line;
  }
  std::filesystem::path sidecar = stem;
  sidecar += ".transform";
  write_file_bytes(sidecar, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

AffineTransform read_transform_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  std::array<double, 6> gt{};
  for (double& v : gt) {
    if (!(in >> v)) throw ValidationError(path.string() + ": expected six numbers");
  }
  return AffineTransform::from_gdal(gt);
}

}  // namespace crownstitch::raster
