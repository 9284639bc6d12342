#pragma once

#include <string>

#include "sf/array.hpp"

namespace sf {

// Images are Arrays shaped [H,W,C] (C = 1, 3 or 4) or [H,W], values in [0,1]
// for color data. Depth and metric dumps use the float formats below.

// 8-bit PNG. Reading returns exactly the channels stored in the file,
// normalized to [0,1]. Writing clamps to [0,1] and quantizes; accepts
// [H,W], [H,W,1] or [H,W,3].
Array read_png(const std::string& path);
void write_png(const std::string& path, const Array& image);

// Portable float map, 32-bit little-endian (scale -1), rows bottom-to-top.
// "Pf" single channel, "PF" three channels. Values round-trip exactly once
// they have passed through float32.
Array read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Array& image);

// Raw f64 dump ("SF64" header) for lossless metric inputs.
Array read_f64(const std::string& path);
void write_f64(const std::string& path, const Array& image);

// Drop an alpha channel if present (compositing over `bg`), expand gray to
// RGB. Returns [H,W,3].
Array to_rgb(const Array& image, double bg);

}  // namespace sf
