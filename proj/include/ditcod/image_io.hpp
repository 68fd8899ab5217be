#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ditcod/tensor.hpp"

// Binary PGM (P5) and PPM (P6) with maxval 255. Pixels map to [0,1] by v/255.
namespace ditcod {

/// Parses a P5/P6 file image into [C,H,W] (C = 1 or 3). Throws ParseError with the
/// byte offset of the first offending byte.
Tensor parse_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Tensor& image);

/// [1,H,W] -> P5, [3,H,W] -> P6. Values are clamped to [0,1] and rounded to the
/// nearest level; non-finite values throw NumericalError.
void save_pnm(const std::filesystem::path& path, const Tensor& image);
Tensor load_pnm(const std::filesystem::path& path);

std::uint8_t quantize(double v);

}  // namespace ditcod
