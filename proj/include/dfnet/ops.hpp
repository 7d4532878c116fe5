#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dfnet/tensor.hpp"

namespace dfnet {

/// Convolution hyperparameters: kernel size, dilation, padding, stride.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t k = 3;
  std::size_t d = 1;
  std::size_t p = 1;
  std::size_t s = 1;

  /// floor((extent + 2p - d(k-1) - 1) / s) + 1; throws ConfigError if < 1.
  std::size_t output_extent(std::size_t extent) const;
  /// Throws ConfigError for zero channels, kernel, dilation or stride.
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct PoolSpec {
  std::size_t k = 3;
  std::size_t p = 1;
  std::size_t s = 1;

  std::size_t output_extent(std::size_t extent) const;

  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

enum class FusionMode { average, multiply };

std::string_view to_string(FusionMode mode);

// Layers. All return new tensors and record a backward closure when any input
// requires a gradient.

/// Cross-correlation with zero padding. `weights` has shape
/// (out_channels, in_channels, k, k); `bias` holds out_channels values in any
/// shape, or is undefined for no bias.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec);

/// Window mean with zero padding counted in the divisor (always k*k).
Tensor avg_pool2d(const Tensor& input, const PoolSpec& spec);

/// Mean over bins [floor(i*H/bh), ceil((i+1)*H/bh)).
Tensor adaptive_avg_pool(const Tensor& input, std::size_t bins_h, std::size_t bins_w);

/// Align-corners bilinear enlargement. Downsampling is rejected.
Tensor bilinear_upsample(const Tensor& input, std::size_t out_h, std::size_t out_w);

/// (a + b) / 2 or a * b, elementwise.
Tensor fuse(const Tensor& a, const Tensor& b, FusionMode mode);

Tensor concat_channels(std::span<const Tensor> parts);

Tensor relu(const Tensor& input);
Tensor sigmoid(const Tensor& input);
/// Hard clamp to [0, 1]; gradient passes only strictly inside the interval.
Tensor clamp01(const Tensor& input);
/// Softmax across the channel axis at every (n, h, w).
Tensor softmax_channels(const Tensor& input);
/// Divides every channel vector by its sum; vectors summing to at most eps
/// become uniform.
Tensor renormalize_channels(const Tensor& input, double eps = 1e-12);
/// log(max(x, eps)); zero gradient where the floor is active.
Tensor log_floor(const Tensor& input, double eps = 1e-12);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Swaps the height and width axes.
Tensor transpose_hw(const Tensor& input);

/// Sum of all elements as a (1,1,1,1) tensor.
Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);

}  // namespace dfnet
