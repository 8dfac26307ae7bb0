#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "synthct/imaging.hpp"

namespace synthct {

/// Lossless 8-bit grayscale PNG.
std::vector<std::uint8_t> encode_png(const Gray8Image& image);
/// Decodes any PNG, converting to 8-bit grayscale. Throws MalformedInput.
Gray8Image decode_png(std::span<const std::uint8_t> bytes);

}  // namespace synthct
