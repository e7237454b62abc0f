#include "crownstitch/raster/geotiff.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>

#include "crownstitch/error.hpp"
#include "crownstitch/raster/image_io.hpp"

namespace crownstitch::raster {

namespace {

enum Tag : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kPhotometric = 262,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kPlanarConfig = 284,
  kPredictor = 317,
  kTileWidth = 322,
  kTileLength = 323,
  kTileOffsets = 324,
  kTileByteCounts = 325,
  kExtraSamples = 338,
  kSampleFormat = 339,
  kModelPixelScale = 33550,
  kModelTiepoint = 33922,
  kModelTransformation = 34264,
  kGeoKeyDirectory = 34735,
  kGeoDoubleParams = 34736,
  kGeoAsciiParams = 34737,
  kGdalNodata = 42113,
};

enum GeoKey : std::uint16_t {
  kGTModelType = 1024,
  kGTRasterType = 1025,
  kGTCitation = 1026,
  kGeographicType = 2048,
  kProjectedCSType = 3072,
};

enum FieldType : std::uint16_t {
  kByte = 1,
  kAscii = 2,
  kShort = 3,
  kLong = 4,
  kRational = 5,
  kSByte = 6,
  kUndefined = 7,
  kSShort = 8,
  kSLong = 9,
  kSRational = 10,
  kFloat = 11,
  kDouble = 12,
};

std::size_t field_size(std::uint16_t type) {
  switch (type) {
    case kByte: case kAscii: case kSByte: case kUndefined: return 1;
    case kShort: case kSShort: return 2;
    case kLong: case kSLong: case kFloat: return 4;
    case kRational: case kSRational: case kDouble: return 8;
    default: return 0;
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    if (bytes.size() < 8) throw RuntimeFailure("file too small to be a TIFF");
    if (bytes[0] == 'I' && bytes[1] == 'I') {
      big_endian_ = false;
    } else if (bytes[0] == 'M' && bytes[1] == 'M') {
      big_endian_ = true;
    } else {
      throw RuntimeFailure("not a TIFF file (bad byte-order mark)");
    }
    const auto magic = u16(2);
    if (magic == 43) throw RuntimeFailure("BigTIFF is not supported");
    if (magic != 42) throw RuntimeFailure("not a TIFF file (bad magic number)");
  }

  bool big_endian() const { return big_endian_; }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

  void check(std::size_t off, std::size_t len) const {
    if (off > bytes_.size() || len > bytes_.size() - off) {
      throw RuntimeFailure("TIFF structure points outside the file");
    }
  }

  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    const std::uint8_t* p = bytes_.data() + off;
    return big_endian_ ? static_cast<std::uint16_t>(p[0] << 8 | p[1])
                       : static_cast<std::uint16_t>(p[1] << 8 | p[0]);
  }
  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    const std::uint8_t* p = bytes_.data() + off;
    return big_endian_ ? (std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 |
                          std::uint32_t{p[2]} << 8 | p[3])
                       : (std::uint32_t{p[3]} << 24 | std::uint32_t{p[2]} << 16 |
                          std::uint32_t{p[1]} << 8 | p[0]);
  }
  std::uint64_t u64(std::size_t off) const {
    const std::uint64_t a = u32(off);
    const std::uint64_t b = u32(off + 4);
    return big_endian_ ? (a << 32 | b) : (b << 32 | a);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool big_endian_ = false;
};

struct Entry {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::size_t data_offset = 0;  // absolute offset of the value bytes
};

class Ifd {
 public:
  Ifd(const Reader& r, std::size_t offset) : r_(r) {
    const std::uint16_t n = r.u16(offset);
    for (std::uint16_t i = 0; i < n; ++i) {
      const std::size_t e = offset + 2 + 12u * i;
      Entry entry;
      const std::uint16_t tag = r.u16(e);
      entry.type = r.u16(e + 2);
      entry.count = r.u32(e + 4);
      const std::size_t size = field_size(entry.type);
      if (size == 0) continue;
      const std::size_t total = size * entry.count;
      entry.data_offset = total <= 4 ? e + 8 : r.u32(e + 8);
      r.check(entry.data_offset, total);
      entries_[tag] = entry;
    }
  }

  bool has(std::uint16_t tag) const { return entries_.count(tag) != 0; }

  std::vector<double> numbers(std::uint16_t tag) const {
    std::vector<double> out;
    const auto it = entries_.find(tag);
    if (it == entries_.end()) return out;
    const Entry& e = it->second;
    const std::size_t size = field_size(e.type);
    for (std::uint32_t i = 0; i < e.count; ++i) {
      const std::size_t off = e.data_offset + size * i;
      switch (e.type) {
        case kByte: case kUndefined: out.push_back(r_.bytes()[off]); break;
        case kSByte: out.push_back(static_cast<std::int8_t>(r_.bytes()[off])); break;
        case kShort: out.push_back(r_.u16(off)); break;
        case kSShort: out.push_back(static_cast<std::int16_t>(r_.u16(off))); break;
        case kLong: out.push_back(r_.u32(off)); break;
        case kSLong: out.push_back(static_cast<std::int32_t>(r_.u32(off))); break;
        case kRational: out.push_back(static_cast<double>(r_.u32(off)) / r_.u32(off + 4)); break;
        case kSRational:
          out.push_back(static_cast<double>(static_cast<std::int32_t>(r_.u32(off))) /
                        static_cast<std::int32_t>(r_.u32(off + 4)));
          break;
        case kFloat: out.push_back(std::bit_cast<float>(r_.u32(off))); break;
        case kDouble: out.push_back(std::bit_cast<double>(r_.u64(off))); break;
        default: break;
      }
    }
    return out;
  }

  double number(std::uint16_t tag, double fallback) const {
    const auto v = numbers(tag);
    return v.empty() ? fallback : v.front();
  }

  std::string ascii(std::uint16_t tag) const {
    const auto it = entries_.find(tag);
    if (it == entries_.end() || it->second.type != kAscii) return {};
    const auto* p = reinterpret_cast<const char*>(r_.bytes().data() + it->second.data_offset);
    std::string s(p, it->second.count);
    while (!s.empty() && s.back() == '\0') s.pop_back();
    return s;
  }

 private:
  const Reader& r_;
  std::map<std::uint16_t, Entry> entries_;
};

// TIFF LZW: MSB-first codes, 9..12 bits, code width grows one code early.
std::vector<std::uint8_t> lzw_decode(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  std::vector<std::vector<std::uint8_t>> table;
  auto reset = [&] {
    table.assign(258, {});
    for (int i = 0; i < 256; ++i) table[i] = {static_cast<std::uint8_t>(i)};
  };
  reset();

  std::size_t bitpos = 0;
  int width = 9;
  auto next_code = [&]() -> int {
    if (bitpos + width > in.size() * 8) return 257;
    int code = 0;
    for (int i = 0; i < width; ++i) {
      const std::size_t b = bitpos + i;
      code = (code << 1) | ((in[b >> 3] >> (7 - (b & 7))) & 1);
    }
    bitpos += width;
    return code;
  };

  int prev = -1;
  while (out.size() < expected) {
    const int code = next_code();
    if (code == 257) break;
    if (code == 256) {
      reset();
      width = 9;
      prev = -1;
      continue;
    }
    std::vector<std::uint8_t> entry;
    if (code < static_cast<int>(table.size())) {
      entry = table[code];
      if (prev >= 0) {
        auto added = table[prev];
        added.push_back(entry.front());
        table.push_back(std::move(added));
      }
    } else if (prev >= 0 && code == static_cast<int>(table.size())) {
      entry = table[prev];
      entry.push_back(entry.front());
      table.push_back(entry);
    } else {
      throw RuntimeFailure("corrupt LZW stream");
    }
    out.insert(out.end(), entry.begin(), entry.end());
    prev = code;
    const auto next_index = table.size() + 1;
    if (next_index >= 4096) {
      width = 12;
    } else if (next_index >= 2048) {
      width = 12;
    } else if (next_index >= 1024) {
      width = 11;
    } else if (next_index >= 512) {
      width = 10;
    }
  }
  return out;
}

std::vector<std::uint8_t> packbits_decode(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out;
  out.reserve(expected);
  std::size_t i = 0;
  while (i < in.size() && out.size() < expected) {
    const auto n = static_cast<std::int8_t>(in[i++]);
    if (n >= 0) {
      const std::size_t len = static_cast<std::size_t>(n) + 1;
      if (i + len > in.size()) throw RuntimeFailure("corrupt PackBits stream");
      out.insert(out.end(), in.begin() + static_cast<std::ptrdiff_t>(i),
                 in.begin() + static_cast<std::ptrdiff_t>(i + len));
      i += len;
    } else if (n != -128) {
      if (i >= in.size()) throw RuntimeFailure("corrupt PackBits stream");
      out.insert(out.end(), static_cast<std::size_t>(1 - n), in[i++]);
    }
  }
  return out;
}

std::vector<std::uint8_t> inflate_bytes(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw RuntimeFailure("zlib initialisation failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const std::size_t produced = out.size() - zs.avail_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END && rc != Z_OK && rc != Z_BUF_ERROR) {
    throw RuntimeFailure("corrupt Deflate stream");
  }
  out.resize(produced);
  return out;
}

struct Layout {
  int width = 0;
  int height = 0;
  int spp = 1;
  int bits = 8;
  int format = 1;  // 1 uint, 2 int, 3 float
  int compression = 1;
  int predictor = 1;
  bool planar = false;
  bool tiled = false;
  int chunk_w = 0;
  int chunk_h = 0;
};

// Undo byte order and predictor for one decoded chunk of `rows` rows of
// `cols` pixels each holding `comps` samples.
void postprocess_chunk(std::vector<std::uint8_t>& buf, const Layout& L, bool big_endian, int rows,
                       int cols, int comps) {
  const int bps = L.bits / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(cols) * comps * bps;
  if (buf.size() < row_bytes * rows) buf.resize(row_bytes * rows, 0);

  if (L.predictor == 3) {
    std::vector<std::uint8_t> tmp(row_bytes);
    const std::size_t wc = static_cast<std::size_t>(cols) * comps;
    for (int r = 0; r < rows; ++r) {
      std::uint8_t* row = buf.data() + row_bytes * r;
      for (std::size_t i = comps; i < row_bytes; ++i) {
        row[i] = static_cast<std::uint8_t>(row[i] + row[i - comps]);
      }
      std::copy_n(row, row_bytes, tmp.begin());
      for (std::size_t i = 0; i < wc; ++i) {
        for (int b = 0; b < bps; ++b) {
          // Bytes are stored most-significant first; emit host (little-endian) order.
          row[i * bps + b] = tmp[(bps - b - 1) * wc + i];
        }
      }
    }
    return;
  }

  if (big_endian && bps > 1) {
    for (std::size_t i = 0; i + bps <= buf.size(); i += bps) {
      std::reverse(buf.begin() + static_cast<std::ptrdiff_t>(i),
                   buf.begin() + static_cast<std::ptrdiff_t>(i + bps));
    }
  }

  if (L.predictor == 2) {
    for (int r = 0; r < rows; ++r) {
      std::uint8_t* row = buf.data() + row_bytes * r;
      for (int x = 1; x < cols; ++x) {
        for (int c = 0; c < comps; ++c) {
          const std::size_t cur = (static_cast<std::size_t>(x) * comps + c) * bps;
          const std::size_t prev = cur - static_cast<std::size_t>(comps) * bps;
          switch (bps) {
            case 1: row[cur] = static_cast<std::uint8_t>(row[cur] + row[prev]); break;
            case 2: {
              std::uint16_t a, b;
              std::memcpy(&a, row + cur, 2);
              std::memcpy(&b, row + prev, 2);
              a = static_cast<std::uint16_t>(a + b);
              std::memcpy(row + cur, &a, 2);
              break;
            }
            case 4: {
              std::uint32_t a, b;
              std::memcpy(&a, row + cur, 4);
              std::memcpy(&b, row + prev, 4);
              a += b;
              std::memcpy(row + cur, &a, 4);
              break;
            }
            default: {
              std::uint64_t a, b;
              std::memcpy(&a, row + cur, 8);
              std::memcpy(&b, row + prev, 8);
              a += b;
              std::memcpy(row + cur, &a, 8);
              break;
            }
          }
        }
      }
    }
  }
}

double sample_to_double(const std::uint8_t* p, const Layout& L) {
  switch (L.bits) {
    case 8: return L.format == 2 ? static_cast<std::int8_t>(*p) : *p;
    case 16: {
      std::uint16_t v;
      std::memcpy(&v, p, 2);
      return L.format == 2 ? static_cast<std::int16_t>(v) : v;
    }
    case 32: {
      std::uint32_t v;
      std::memcpy(&v, p, 4);
      if (L.format == 3) return std::bit_cast<float>(v);
      return L.format == 2 ? static_cast<std::int32_t>(v) : v;
    }
    default: {
      std::uint64_t v;
      std::memcpy(&v, p, 8);
      if (L.format == 3) return std::bit_cast<double>(v);
      return L.format == 2 ? static_cast<double>(static_cast<std::int64_t>(v))
                           : static_cast<double>(v);
    }
  }
}

std::optional<std::string> crs_from_geokeys(const Ifd& ifd, int* raster_type) {
  const auto dir = ifd.numbers(kGeoKeyDirectory);
  if (dir.size() < 4) return std::nullopt;
  const auto nkeys = static_cast<std::size_t>(dir[3]);
  std::optional<std::string> epsg;
  std::string citation;
  const std::string ascii = ifd.ascii(kGeoAsciiParams);
  for (std::size_t k = 0; k < nkeys && 4 + 4 * k + 3 < dir.size(); ++k) {
    const auto key = static_cast<std::uint16_t>(dir[4 + 4 * k]);
    const auto loc = static_cast<std::uint16_t>(dir[4 + 4 * k + 1]);
    const auto count = static_cast<std::size_t>(dir[4 + 4 * k + 2]);
    const auto value = static_cast<std::size_t>(dir[4 + 4 * k + 3]);
    if (key == kGTRasterType && loc == 0) *raster_type = static_cast<int>(value);
    if ((key == kProjectedCSType || key == kGeographicType) && loc == 0 && value != 0 &&
        value != 32767) {
      epsg = "EPSG:" + std::to_string(value);
    }
    if (key == kGTCitation && loc == kGeoAsciiParams && value + count <= ascii.size() + 1) {
      citation = ascii.substr(value, count);
      while (!citation.empty() && (citation.back() == '|' || citation.back() == '\0')) {
        citation.pop_back();
      }
    }
  }
  if (epsg) return epsg;
  if (!citation.empty()) return citation;
  return std::nullopt;
}

}  // namespace

GeoRaster decode_geotiff(std::span<const std::uint8_t> bytes, const GeoOverride& override) {
  const Reader r(bytes);
  const Ifd ifd(r, r.u32(4));

  Layout L;
  L.width = static_cast<int>(ifd.number(kImageWidth, 0));
  L.height = static_cast<int>(ifd.number(kImageLength, 0));
  L.spp = static_cast<int>(ifd.number(kSamplesPerPixel, 1));
  const auto bits = ifd.numbers(kBitsPerSample);
  L.bits = bits.empty() ? 1 : static_cast<int>(bits.front());
  if (std::any_of(bits.begin(), bits.end(), [&](double b) { return b != L.bits; })) {
    throw RuntimeFailure("TIFF bands with differing bit depths are not supported");
  }
  L.format = static_cast<int>(ifd.number(kSampleFormat, 1));
  L.compression = static_cast<int>(ifd.number(kCompression, 1));
  L.predictor = static_cast<int>(ifd.number(kPredictor, 1));
  L.planar = ifd.number(kPlanarConfig, 1) == 2 && L.spp > 1;
  L.tiled = ifd.has(kTileWidth);

  if (L.width < 1 || L.height < 1) throw RuntimeFailure("TIFF has no image dimensions");
  if (L.bits != 8 && L.bits != 16 && L.bits != 32 && L.bits != 64) {
    throw RuntimeFailure("unsupported TIFF bit depth " + std::to_string(L.bits));
  }
  if (L.bits != 8 && L.spp != 1) {
    throw RuntimeFailure("multi-band TIFFs must be 8-bit (got " + std::to_string(L.bits) + "-bit)");
  }
  if (L.bits == 8 && L.spp != 1 && L.spp != 3 && L.spp != 4) {
    throw RuntimeFailure("8-bit TIFFs must have 1, 3 or 4 samples per pixel");
  }
  if (L.compression != 1 && L.compression != 5 && L.compression != 8 && L.compression != 32946 &&
      L.compression != 32773) {
    throw RuntimeFailure("unsupported TIFF compression " + std::to_string(L.compression));
  }
  if (L.predictor == 3 && L.format != 3) throw RuntimeFailure("floating predictor on integer data");

  std::vector<double> offsets, counts;
  if (L.tiled) {
    L.chunk_w = static_cast<int>(ifd.number(kTileWidth, 0));
    L.chunk_h = static_cast<int>(ifd.number(kTileLength, 0));
    offsets = ifd.numbers(kTileOffsets);
    counts = ifd.numbers(kTileByteCounts);
  } else {
    L.chunk_w = L.width;
    L.chunk_h = std::min(L.height, static_cast<int>(ifd.number(kRowsPerStrip, L.height)));
    offsets = ifd.numbers(kStripOffsets);
    counts = ifd.numbers(kStripByteCounts);
  }
  if (L.chunk_w < 1 || L.chunk_h < 1) throw RuntimeFailure("invalid TIFF chunk size");
  const int across = (L.width + L.chunk_w - 1) / L.chunk_w;
  const int down = (L.height + L.chunk_h - 1) / L.chunk_h;
  const int planes = L.planar ? L.spp : 1;
  const int comps = L.planar ? 1 : L.spp;
  const auto nchunks = static_cast<std::size_t>(across) * down * planes;
  if (offsets.size() < nchunks || counts.size() < nchunks) {
    throw RuntimeFailure("TIFF chunk table is incomplete");
  }

  const int bps = L.bits / 8;
  const std::size_t pixel_bytes = static_cast<std::size_t>(L.spp) * bps;
  std::vector<std::uint8_t> image(static_cast<std::size_t>(L.width) * L.height * pixel_bytes);

  for (int plane = 0; plane < planes; ++plane) {
    for (int cy = 0; cy < down; ++cy) {
      for (int cx = 0; cx < across; ++cx) {
        const std::size_t idx = (static_cast<std::size_t>(plane) * down + cy) * across + cx;
        const auto off = static_cast<std::size_t>(offsets[idx]);
        const auto len = static_cast<std::size_t>(counts[idx]);
        r.check(off, len);
        const auto raw = bytes.subspan(off, len);
        // Strips at the bottom may be short; tiles are always full-size.
        const int rows = L.tiled ? L.chunk_h : std::min(L.chunk_h, L.height - cy * L.chunk_h);
        const std::size_t expected = static_cast<std::size_t>(rows) * L.chunk_w * comps * bps;
        std::vector<std::uint8_t> buf;
        switch (L.compression) {
          case 1: buf.assign(raw.begin(), raw.end()); break;
          case 5: buf = lzw_decode(raw, expected); break;
          case 32773: buf = packbits_decode(raw, expected); break;
          default: buf = inflate_bytes(raw, expected); break;
        }
        postprocess_chunk(buf, L, r.big_endian(), rows, L.chunk_w, comps);

        const int x0 = cx * L.chunk_w;
        const int y0 = cy * L.chunk_h;
        const int copy_w = std::min(L.chunk_w, L.width - x0);
        const int copy_h = std::min(rows, L.height - y0);
        for (int y = 0; y < copy_h; ++y) {
          for (int x = 0; x < copy_w; ++x) {
            const std::uint8_t* src =
                buf.data() + (static_cast<std::size_t>(y) * L.chunk_w + x) * comps * bps;
            std::uint8_t* dst =
                image.data() + (static_cast<std::size_t>(y0 + y) * L.width + (x0 + x)) * pixel_bytes;
            if (L.planar) {
              std::memcpy(dst + static_cast<std::size_t>(plane) * bps, src, bps);
            } else {
              std::memcpy(dst, src, pixel_bytes);
            }
          }
        }
      }
    }
  }

  // Georeferencing.
  int raster_type = 1;
  std::optional<std::string> crs = crs_from_geokeys(ifd, &raster_type);
  std::optional<AffineTransform> transform;
  const auto scale = ifd.numbers(kModelPixelScale);
  const auto tie = ifd.numbers(kModelTiepoint);
  const auto matrix = ifd.numbers(kModelTransformation);
  if (scale.size() >= 2 && tie.size() >= 6) {
    transform = AffineTransform(tie[3] - tie[0] * scale[0], scale[0], tie[4] + tie[1] * scale[1],
                                -scale[1]);
  } else if (matrix.size() >= 16) {
    transform = AffineTransform::from_gdal({matrix[3], matrix[0], matrix[1], matrix[7], matrix[4],
                                            matrix[5]});
  }
  if (transform && raster_type == 2) {
    // PixelIsPoint: tiepoints address pixel centers.
    transform = transform->translated(-0.5, -0.5);
  }
  if (override.transform) transform = override.transform;
  if (override.crs) crs = override.crs;
  if (!transform) {
    throw ValidationError("TIFF is not georeferenced; supply a transform explicitly");
  }
  if (!crs) throw ValidationError("TIFF has no CRS; supply one explicitly");

  const std::string nodata_text = ifd.ascii(kGdalNodata);
  std::optional<float> nodata;
  if (!nodata_text.empty()) {
    try {
      nodata = std::stof(nodata_text);
    } catch (const std::exception&) {
      if (nodata_text.find("nan") != std::string::npos) nodata = std::nanf("");
    }
  }

  const std::size_t npix = static_cast<std::size_t>(L.width) * L.height;
  if (L.bits == 8 && L.format != 3) {
    const int out_bands = L.spp == 4 ? 3 : L.spp;
    std::vector<std::uint8_t> samples(npix * out_bands);
    for (std::size_t i = 0; i < npix; ++i) {
      std::copy_n(image.begin() + static_cast<std::ptrdiff_t>(i * L.spp), out_bands,
                  samples.begin() + static_cast<std::ptrdiff_t>(i * out_bands));
    }
    return GeoRaster::from_u8(L.width, L.height, out_bands, *transform, *crs, std::move(samples));
  }
  std::vector<float> samples(npix);
  for (std::size_t i = 0; i < npix; ++i) {
    samples[i] = static_cast<float>(sample_to_double(image.data() + i * bps, L));
  }
  return GeoRaster::from_f32(L.width, L.height, *transform, *crs, std::move(samples), nodata);
}

GeoRaster read_geotiff(const std::filesystem::path& path, const GeoOverride& override) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_geotiff(bytes, override);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const RuntimeFailure& e) {
    throw RuntimeFailure(path.string() + ": " + e.what());
  }
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v & 0xffff));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    u32(static_cast<std::uint32_t>(bits & 0xffffffffu));
    u32(static_cast<std::uint32_t>(bits >> 32));
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void align() {
    if (buf_.size() % 2) u8(0);
  }
  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

struct OutEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::vector<std::uint8_t> payload;  // little-endian value bytes
};

template <typename T>
std::vector<std::uint8_t> le_bytes(const std::vector<T>& values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(T));
  for (std::size_t i = 0; i < values.size(); ++i) {
    T v = values[i];
    if constexpr (std::endian::native == std::endian::big) {
      auto* p = reinterpret_cast<std::uint8_t*>(&v);
      std::reverse(p, p + sizeof(T));
    }
    std::memcpy(out.data() + i * sizeof(T), &v, sizeof(T));
  }
  return out;
}

std::optional<int> epsg_code(const std::string& crs) {
  std::string_view s = crs;
  for (const std::string_view prefix : {"EPSG:", "epsg:"}) {
    if (s.substr(0, prefix.size()) == prefix) {
      int code = 0;
      const auto tail = s.substr(prefix.size());
      const auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), code);
      if (ec == std::errc() && p == tail.data() + tail.size()) return code;
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::uint8_t> encode_geotiff(const GeoRaster& raster) {
  const int w = raster.width();
  const int h = raster.height();
  const int spp = raster.bands();
  const bool is_float = raster.sample_type() == SampleType::kFloat32;
  const int bps = is_float ? 4 : 1;
  const std::size_t row_bytes = static_cast<std::size_t>(w) * spp * bps;
  const int rows_per_strip = static_cast<int>(std::max<std::size_t>(1, 65536 / row_bytes));
  const int nstrips = (h + rows_per_strip - 1) / rows_per_strip;

  std::vector<std::uint8_t> pixels;
  if (is_float) {
    const auto f = raster.f32();
    pixels = le_bytes(std::vector<float>(f.begin(), f.end()));
  } else {
    const auto u = raster.u8();
    pixels.assign(u.begin(), u.end());
  }

  std::vector<std::vector<std::uint8_t>> strips;
  for (int s = 0; s < nstrips; ++s) {
    const int rows = std::min(rows_per_strip, h - s * rows_per_strip);
    const std::uint8_t* src = pixels.data() + row_bytes * s * rows_per_strip;
    const uLong src_len = static_cast<uLong>(row_bytes * rows);
    uLongf dst_len = compressBound(src_len);
    std::vector<std::uint8_t> dst(dst_len);
    if (compress2(dst.data(), &dst_len, src, src_len, 6) != Z_OK) {
      throw RuntimeFailure("zlib compression failed");
    }
    dst.resize(dst_len);
    strips.push_back(std::move(dst));
  }

  std::vector<OutEntry> entries;
  auto add_short = [&](std::uint16_t tag, std::vector<std::uint16_t> v) {
    entries.push_back({tag, kShort, static_cast<std::uint32_t>(v.size()), le_bytes(v)});
  };
  auto add_long = [&](std::uint16_t tag, std::vector<std::uint32_t> v) {
    entries.push_back({tag, kLong, static_cast<std::uint32_t>(v.size()), le_bytes(v)});
  };
  auto add_double = [&](std::uint16_t tag, std::vector<double> v) {
    entries.push_back({tag, kDouble, static_cast<std::uint32_t>(v.size()), le_bytes(v)});
  };
  auto add_ascii = [&](std::uint16_t tag, const std::string& s) {
    std::vector<std::uint8_t> b(s.begin(), s.end());
    b.push_back(0);
    entries.push_back({tag, kAscii, static_cast<std::uint32_t>(b.size()), b});
  };

  add_long(kImageWidth, {static_cast<std::uint32_t>(w)});
  add_long(kImageLength, {static_cast<std::uint32_t>(h)});
  add_short(kBitsPerSample, std::vector<std::uint16_t>(spp, static_cast<std::uint16_t>(bps * 8)));
  add_short(kCompression, {8});
  add_short(kPhotometric, {static_cast<std::uint16_t>(spp == 3 ? 2 : 1)});
  add_long(kStripOffsets, std::vector<std::uint32_t>(nstrips, 0));  // patched below
  add_short(kSamplesPerPixel, {static_cast<std::uint16_t>(spp)});
  add_long(kRowsPerStrip, {static_cast<std::uint32_t>(rows_per_strip)});
  std::vector<std::uint32_t> strip_counts;
  for (const auto& s : strips) strip_counts.push_back(static_cast<std::uint32_t>(s.size()));
  add_long(kStripByteCounts, strip_counts);
  add_short(kPlanarConfig, {1});
  if (spp > 1 && spp != 3) add_short(kExtraSamples, std::vector<std::uint16_t>(spp - 3, 0));
  add_short(kSampleFormat, std::vector<std::uint16_t>(spp, static_cast<std::uint16_t>(is_float ? 3 : 1)));

  const auto& t = raster.transform();
  add_double(kModelPixelScale, {std::abs(t.scale_x()), std::abs(t.scale_y()), 0.0});
  if (t.scale_x() < 0.0 || t.scale_y() > 0.0) {
    // Pixel scale cannot express flipped axes; use the full matrix instead.
    add_double(kModelTransformation,
               {t.scale_x(), 0, 0, t.origin_x(), 0, t.scale_y(), 0, t.origin_y(), 0, 0, 0, 0, 0, 0,
                0, 1});
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [](const OutEntry& e) { return e.tag == kModelPixelScale; }),
                  entries.end());
  } else {
    add_double(kModelTiepoint, {0, 0, 0, t.origin_x(), t.origin_y(), 0});
  }

  std::vector<std::uint16_t> keys{1, 1, 0, 0};
  std::string ascii_params;
  const auto code = epsg_code(raster.crs());
  const bool geographic = code && *code >= 4000 && *code < 5000;
  keys.insert(keys.end(), {kGTModelType, 0, 1, static_cast<std::uint16_t>(geographic ? 2 : 1)});
  keys.insert(keys.end(), {kGTRasterType, 0, 1, 1});
  if (code) {
    keys.insert(keys.end(), {static_cast<std::uint16_t>(geographic ? kGeographicType : kProjectedCSType),
                             0, 1, static_cast<std::uint16_t>(*code)});
  } else if (!raster.crs().empty()) {
    ascii_params = raster.crs() + "|";
    keys.insert(keys.end(), {kGTCitation, kGeoAsciiParams,
                             static_cast<std::uint16_t>(ascii_params.size()), 0});
  }
  keys[3] = static_cast<std::uint16_t>((keys.size() - 4) / 4);
  add_short(kGeoKeyDirectory, keys);
  if (!ascii_params.empty()) add_ascii(kGeoAsciiParams, ascii_params);
  if (raster.nodata()) {
    char text[64];
    std::snprintf(text, sizeof(text), "%.9g", static_cast<double>(*raster.nodata()));
    add_ascii(kGdalNodata, text);
  }

  std::sort(entries.begin(), entries.end(),
            [](const OutEntry& a, const OutEntry& b) { return a.tag < b.tag; });

  // Layout: header, strips, out-of-line values, IFD.
  Writer out;
  out.u8('I');
  out.u8('I');
  out.u16(42);
  out.u32(0);  // IFD offset, patched
  std::vector<std::uint32_t> strip_offsets;
  for (const auto& s : strips) {
    out.align();
    strip_offsets.push_back(static_cast<std::uint32_t>(out.size()));
    out.bytes(s);
  }
  for (auto& e : entries) {
    if (e.tag == kStripOffsets) e.payload = le_bytes(strip_offsets);
  }
  std::vector<std::uint32_t> value_offsets(entries.size(), 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].payload.size() > 4) {
      out.align();
      value_offsets[i] = static_cast<std::uint32_t>(out.size());
      out.bytes(entries[i].payload);
    }
  }
  out.align();
  const auto ifd_offset = static_cast<std::uint32_t>(out.size());
  out.u16(static_cast<std::uint16_t>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    out.u16(e.tag);
    out.u16(e.type);
    out.u32(e.count);
    if (e.payload.size() > 4) {
      out.u32(value_offsets[i]);
    } else {
      std::uint8_t inline_bytes[4] = {0, 0, 0, 0};
      std::copy(e.payload.begin(), e.payload.end(), inline_bytes);
      out.bytes(inline_bytes);
    }
  }
  out.u32(0);
  auto& data = out.data();
  for (int i = 0; i < 4; ++i) data[4 + i] = static_cast<std::uint8_t>(ifd_offset >> (8 * i));
  return std::move(data);
}

void write_geotiff(const GeoRaster& raster, const std::filesystem::path& path) {
  write_file_bytes(path, encode_geotiff(raster));
}

}  // namespace crownstitch::raster
