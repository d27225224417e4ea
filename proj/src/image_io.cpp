#include "pidnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pidnet {
namespace {

struct NetpbmHeader {
  std::string magic;
  int w = 0, h = 0, maxval = 0;
};

// Reads the header including the single whitespace byte before the raster.
NetpbmHeader read_header(std::istream& in, const std::string& path) {
  NetpbmHeader hd;
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  hd.magic = token();
  try {
    hd.w = std::stoi(token());
    hd.h = std::stoi(token());
    hd.maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError("'" + path + "': malformed netpbm header");
  }
  if (hd.w < 1 || hd.h < 1 || hd.maxval != 255) {
    throw FormatError("'" + path + "': unsupported netpbm geometry or maxval");
  }
  return hd;
}

std::vector<std::uint8_t> read_raster(std::istream& in, std::size_t n, const std::string& path) {
  std::vector<std::uint8_t> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("'" + path + "': raster truncated");
  }
  return buf;
}

void write_netpbm(const std::string& path, const char* magic, int w, int h,
                  const std::vector<std::uint8_t>& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << magic << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace

void write_ppm(const std::string& path, const Tensor<float>& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_ppm: expected 1x3xHxW, got " + s.str());
  std::vector<std::uint8_t> raster(static_cast<std::size_t>(3) * s.plane());
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
        raster[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  write_netpbm(path, "P6", s.w, s.h, raster);
}

Tensor<float> read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  const NetpbmHeader hd = read_header(in, path);
  if (hd.magic != "P6") throw FormatError("'" + path + "': not a binary PPM (P6)");
  const auto raster = read_raster(in, static_cast<std::size_t>(3) * hd.w * hd.h, path);
  Tensor<float> img(Shape{1, 3, hd.h, hd.w});
  for (int y = 0; y < hd.h; ++y)
    for (int x = 0; x < hd.w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) = raster[(static_cast<std::size_t>(y) * hd.w + x) * 3 + c] / 255.0f;
  return img;
}

void write_pgm(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(h) * w) {
    throw ShapeError("write_pgm: pixel count does not match " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  write_netpbm(path, "P5", w, h, pixels);
}

void write_pgm(const std::string& path, const LabelMap& labels) {
  if (labels.n != 1) throw ShapeError("write_pgm: expected a single label map");
  write_pgm(path, labels.h, labels.w, labels.data);
}

LabelMap read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  const NetpbmHeader hd = read_header(in, path);
  if (hd.magic != "P5") throw FormatError("'" + path + "': not a binary PGM (P5)");
  LabelMap out(1, hd.h, hd.w);
  out.data = read_raster(in, static_cast<std::size_t>(hd.w) * hd.h, path);
  return out;
}

std::vector<std::uint8_t> normalize_plane(const float* values, std::size_t count) {
  std::vector<std::uint8_t> out(count, 0);
  if (count == 0) return out;
  const auto [lo, hi] = std::minmax_element(values, values + count);
  const float range = *hi - *lo;
  if (!(range > 0)) return out;
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround((values[i] - *lo) / range * 255.0f));
  }
  return out;
}

}  // namespace pidnet
