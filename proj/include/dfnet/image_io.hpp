#pragma once

#include <filesystem>

#include "dfnet/labels.hpp"
#include "dfnet/tensor.hpp"

namespace dfnet {

/// Maps [0,1] to the nearest k/255.
double quantize8(double v);

/// Binary P6, maxval 255. `image` is (1, 3, H, W) with values in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& image);
/// Returns a (1, 3, H, W) tensor holding k/255 values.
Tensor read_ppm(const std::filesystem::path& path);

/// Binary P5, maxval 255, class index as gray level. `labels` has n == 1.
void write_pgm(const std::filesystem::path& path, const LabelBatch& labels);
LabelBatch read_pgm(const std::filesystem::path& path);

}  // namespace dfnet
