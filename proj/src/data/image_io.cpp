#include "ditcod/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "ditcod/errors.hpp"

namespace ditcod {

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> b, std::size_t start) : b_(b), pos_(start) {}

  std::size_t pos() const { return pos_; }
  std::size_t last_start() const { return last_start_; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    last_start_ = start;
    std::size_t v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1u << 24) throw ParseError(std::string("pnm: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("pnm: expected ") + what +
                           (pos_ < b_.size() ? "" : ", found end of file"),
                       pos_);
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) {
      throw ParseError("pnm: expected whitespace after maxval", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_;
  std::size_t last_start_ = 0;
};

}  // namespace

std::uint8_t quantize(double v) {
  if (!std::isfinite(v)) throw NumericalError("image value is not finite");
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Tensor parse_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("pnm: expected magic P5 or P6", 0);
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader r(bytes, 2);
  const std::size_t w = r.number("width");
  const std::size_t h = r.number("height");
  const std::size_t maxval = r.number("maxval");
  const std::size_t maxval_at = r.last_start();
  if (w == 0 || h == 0) throw ParseError("pnm: zero image extent", 2);
  if (maxval != 255) {
    throw ParseError("pnm: only maxval 255 is supported, got " + std::to_string(maxval), maxval_at);
  }
  r.single_space();
  const std::size_t offset = r.pos();
  const std::size_t expected = w * h * channels;
  const std::size_t actual = bytes.size() - offset;
  if (actual < expected) {
    throw ParseError("pnm: truncated payload, expected " + std::to_string(expected) +
                         " bytes, got " + std::to_string(actual),
                     bytes.size());
  }
  Tensor t({channels, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        t[(c * h + y) * w + x] = bytes[offset + (y * w + x) * channels + c] / 255.0;
      }
  return t;
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw ShapeError("pnm: expected [1,H,W] or [3,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::string header =
      std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out.push_back(quantize(image[(k * h + y) * w + x]));
  return out;
}

void save_pnm(const std::filesystem::path& path, const Tensor& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Tensor load_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  try {
    return parse_pnm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

}  // namespace ditcod
