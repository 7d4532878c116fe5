#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dfnet/tensor.hpp"

namespace dfnet {

/// Integer class raster for a batch, laid out (batch, height, width).
struct LabelBatch {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::int32_t> data;

  LabelBatch() = default;
  LabelBatch(std::size_t n, std::size_t h, std::size_t w, std::int32_t fill = 0)
      : n(n), h(h), w(w), data(n * h * w, fill) {}

  std::size_t numel() const { return n * h * w; }
  std::size_t plane() const { return h * w; }
  std::int32_t& at(std::size_t b, std::size_t y, std::size_t x) { return data[(b * h + y) * w + x]; }
  std::int32_t at(std::size_t b, std::size_t y, std::size_t x) const {
    return data[(b * h + y) * w + x];
  }

  friend bool operator==(const LabelBatch&, const LabelBatch&) = default;
};

/// Throws DataError naming the first label outside [0, classes).
void validate_labels(const LabelBatch& labels, std::size_t classes);

/// (batch, classes, h, w) indicator tensor.
Tensor one_hot(const LabelBatch& labels, std::size_t classes);

/// Channel argmax of a (batch, c, h, w) tensor; ties resolve to the lowest class.
LabelBatch argmax_channels(const Tensor& scores);

/// Stacks single-image rasters into one batch.
LabelBatch stack_labels(const std::vector<const LabelBatch*>& parts);

}  // namespace dfnet
