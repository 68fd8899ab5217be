#pragma once

#include <filesystem>
#include <iosfwd>

#include "ditcod/tensor.hpp"

// "DTZ" tensor files: magic "DTEN", u8 version (1), u8 dtype (1 = f64), u8 rank,
// rank x u32 little-endian extents, then the row-major little-endian payload.
namespace ditcod::dtz {

inline constexpr unsigned char kVersion = 1;
inline constexpr unsigned char kDtypeF64 = 1;

void write(std::ostream& os, const Tensor& t);
Tensor read(std::istream& is);

void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

}  // namespace ditcod::dtz
