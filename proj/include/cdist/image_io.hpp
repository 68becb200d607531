#pragma once

#include "cdist/tensor.hpp"

#include <filesystem>

namespace cdist {

/// Decodes a PNG/JPEG file into a 1 x 3 x H x W tensor with values in
/// [0, 1]. Throws DataError when the file cannot be decoded.
Tensor load_image(const std::filesystem::path& path);

/// Encodes a single image (values clipped to [0, 1], rounded to 8 bits);
/// the format follows the file extension.
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Area/bilinear resize of a single image.
Tensor resize_image(const Tensor& image, int height, int width);

/// Clamp every value into [0, 1].
Tensor clip_unit(Tensor t);

/// Reflect-pad a batch on the bottom/right to the next multiple of `divisor`.
Tensor reflect_pad_to_multiple(const Tensor& t, int divisor);

/// Top-left crop.
Tensor crop(const Tensor& t, int height, int width);

}  // namespace cdist
