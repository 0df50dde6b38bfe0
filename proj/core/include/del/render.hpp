#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "del/layers.hpp"
#include "del/tensor.hpp"

namespace del {

/// Sum of every unit's density, integrated over each pixel cell:
/// field[m][n] = sum over units of Gu[unit, m] * Gt[unit, n], giving an
/// [N, N] tensor. Micro-net models condition the rows on `input`
/// ([C, N, N]); passing none for them is a ParamError. Only the two
/// logistic-density models have a field to draw.
Tensor receptive_field_image(const Model& model, const Tensor* input = nullptr);

/// Row-major min-max rescale to [0, 255]; a constant field maps to 0.
std::vector<std::uint8_t> to_gray_bytes(const Tensor& field);

/// Binary (P5) PGM with maxval 255. Identical fields give identical bytes.
void write_pgm(const std::filesystem::path& path, const Tensor& field);

/// Reads a binary P5 PGM with maxval <= 255 into an [H, W] tensor of raw
/// gray levels (0..maxval).
Tensor read_pgm(const std::filesystem::path& path);

/// True when the library was built against libpng.
bool png_supported();

/// 8-bit grayscale PNG; throws IoError when png_supported() is false.
void write_png(const std::filesystem::path& path, const Tensor& field);

}  // namespace del
