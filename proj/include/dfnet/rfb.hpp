#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "dfnet/labels.hpp"
#include "dfnet/ops.hpp"
#include "dfnet/tensor.hpp"

namespace dfnet {

/// The six residual fusion block variants, (a) through (f).
enum class RfbStructure { A, B, C, D, E, F };

/// Activation closing the processed path before fusion.
enum class PathActivation { clamp, sigmoid };

/// Channel-preserving convolution inside the processed path.
struct RfbConv {
  std::size_t k = 3;
  std::size_t d = 1;
  std::size_t p = 1;
  std::size_t s = 1;
  friend bool operator==(const RfbConv&, const RfbConv&) = default;
};

struct RfbPool {
  PoolSpec pool;
  friend bool operator==(const RfbPool&, const RfbPool&) = default;
};

using RfbLayer = std::variant<RfbConv, RfbPool>;

struct RFBSpec {
  RfbStructure structure = RfbStructure::F;
  FusionMode fusion = FusionMode::multiply;
  std::vector<RfbLayer> layers;

  /// Layer stack and fusion mode for a structure:
  ///   A/B: conv(k3 d1 p1)                                  avg / mul
  ///   C/D: conv(k3 d1 p1), conv(k3 d2 p2)                  avg / mul
  ///   E/F: conv(k3 d1 p1), conv(k3 d2 p2), avgpool(k3 p1)  avg / mul
  /// All strides are 1.
  static RFBSpec of(RfbStructure structure);
};

/// Parses the config token none|a|b|c|d|e|f; "none" yields nullopt.
std::optional<RfbStructure> parse_rfb_token(std::string_view token);
std::string_view rfb_token(std::optional<RfbStructure> structure);

PathActivation parse_path_activation(std::string_view token);
std::string_view to_string(PathActivation activation);

/// Two-path refinement block: the input is fused with a conv/pool-processed
/// copy of itself and the result renormalized across channels.
class RFB {
 public:
  RFB(RFBSpec spec, std::size_t channels, std::uint64_t seed,
      PathActivation activation = PathActivation::clamp);

  const RFBSpec& spec() const { return spec_; }
  std::size_t channels() const { return channels_; }
  PathActivation activation() const { return activation_; }

  /// Processed path: layers in order, then the closing activation.
  Tensor path(const Tensor& input) const;
  /// fuse(input, path(input)) before renormalization.
  Tensor forward_raw(const Tensor& input) const;
  /// forward_raw followed by channel renormalization.
  Tensor forward(const Tensor& input) const;

  /// Conv weights and biases, named "<prefix>conv<i>.weight" / ".bias".
  std::vector<NamedParameter> parameters(std::string_view prefix = "") const;
  /// Pixels within this distance of the image border see zero padding.
  std::size_t receptive_radius() const;

 private:
  void check_input(const Tensor& input) const;

  RFBSpec spec_;
  std::size_t channels_;
  PathActivation activation_;
  // One entry per conv layer, in path order.
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

RFB build_rfb(const RFBSpec& spec, std::size_t channels, std::uint64_t seed,
              PathActivation activation = PathActivation::clamp);
Tensor apply_rfb(const RFB& rfb, const Tensor& input);

inline constexpr std::size_t kNoBoundary = std::numeric_limits<std::size_t>::max();

/// Per-pixel Chebyshev distance to the nearest pixel of the same image with a
/// different label; kNoBoundary where the image has a single label.
std::vector<std::size_t> boundary_distance(const LabelBatch& labels);

/// Mean |forward_raw(x) - x| stratified by boundary distance. Index d holds
/// distance d (index 0 is unused). Pixels within the block's receptive radius
/// of the image border are skipped so zero padding does not masquerade as a
/// boundary effect.
struct BoundaryReport {
  std::vector<double> mean_change;
  std::vector<std::size_t> pixels;
};

BoundaryReport boundary_effect(const RFB& rfb, const Tensor& input, const LabelBatch& labels);

}  // namespace dfnet
