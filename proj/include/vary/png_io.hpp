#pragma once

#include <string>
#include <vector>

#include "vary/raster.hpp"

namespace vary {

// Minimal PNG support: 8-bit RGB writing (fixed-Huffman deflate) and reading
// of 8-bit gray/RGB/RGBA non-interlaced files. Both ends are deterministic.
std::vector<uint8_t> encode_png(const ImageRaster& img);
ImageRaster decode_png(const std::vector<uint8_t>& bytes);

void write_png(const std::string& path, const ImageRaster& img);
ImageRaster read_png(const std::string& path);

}  // namespace vary
