#pragma once

#include <string>

#include "c2cl/imaging.hpp"

namespace c2cl {

// Loads a PNG or PGM (binary P5) file into a grayscale image with pixels in
// [0,1]. Color PNGs are reduced with the Rec.601 luma weights
// (0.299 R + 0.587 G + 0.114 B); alpha is ignored. 16-bit inputs are scaled
// by 1/65535, 8-bit by 1/255. The format is chosen by file signature, not
// extension. Throws std::runtime_error on unreadable or malformed files.
GrayImage load_image(const std::string& path);

// Writes an 8-bit grayscale PNG (values quantized as round(v*255)).
void save_png(const GrayImage& img, const std::string& path);

// Writes a binary PGM (P5, maxval 255).
void save_pgm(const GrayImage& img, const std::string& path);

// Masks are stored as 8-bit grayscale images: 0 background, 255 foreground.
// On load, any pixel >= 128 is foreground.
Mask load_mask(const std::string& path);
void save_mask(const Mask& mask, const std::string& path);

}  // namespace c2cl
