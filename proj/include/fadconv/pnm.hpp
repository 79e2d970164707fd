#ifndef FADCONV_PNM_HPP
#define FADCONV_PNM_HPP

#include <string>

#include "fadconv/tensor.hpp"

namespace fadconv::pnm {

// Binary PGM (P5) / PPM (P6), 8-bit, maxval 255 only.

// Grayscale values already quantized to [0, 255].
void write_pgm(const std::string& path, const Matrix& gray255);
Matrix read_pgm(const std::string& path);

// Linear [min, max] -> [0, 255] mapping before emission.
void write_pgm_normalized(const std::string& path, const Matrix& values);

// image: (1, 3, H, W) tensor with values in [0, 1].
void write_ppm(const std::string& path, const Tensor4& image);
Tensor4 read_ppm(const std::string& path);

}  // namespace fadconv::pnm

#endif
