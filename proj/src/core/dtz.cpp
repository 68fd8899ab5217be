#include "ditcod/dtz.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ditcod/errors.hpp"

namespace ditcod::dtz {

namespace {

constexpr std::array<char, 4> kMagic{'D', 'T', 'E', 'N'};

template <class U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      throw ParseError(std::string("truncated DTZ ") + what + ": expected " + std::to_string(n) +
                           " bytes, got " + std::to_string(got),
                       offset_ + got);
    }
    offset_ += n;
  }

  template <class U>
  U le(const char* what) {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace

void write(std::ostream& os, const Tensor& t) {
  if (t.rank() > 255) throw ShapeError("DTZ supports rank <= 255");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(os, kVersion);
  put_le<std::uint8_t>(os, kDtypeF64);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) {
    if (e > 0xFFFFFFFFu) throw ShapeError("DTZ extent exceeds u32");
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  }
  for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw IoError("failed writing DTZ stream");
}

Tensor read(std::istream& is) {
  Reader r(is);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw ParseError("bad DTZ magic", 0);
  const auto version = r.le<std::uint8_t>("version");
  if (version != kVersion) {
    throw ParseError("unsupported DTZ version " + std::to_string(version), r.offset() - 1);
  }
  const auto dtype = r.le<std::uint8_t>("dtype");
  if (dtype != kDtypeF64) {
    throw ParseError("unsupported DTZ dtype " + std::to_string(dtype), r.offset() - 1);
  }
  const auto rank = r.le<std::uint8_t>("rank");
  Shape shape(rank);
  for (auto& e : shape) {
    e = r.le<std::uint32_t>("extent");
    if (e == 0) throw ParseError("zero extent in DTZ header", r.offset() - 4);
  }
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = std::bit_cast<double>(r.le<std::uint64_t>("payload"));
  return Tensor(std::move(shape), std::move(data));
}

void save(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write(os, t);
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read(is);
}

}  // namespace ditcod::dtz
