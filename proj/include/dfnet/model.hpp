#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dfnet/init.hpp"
#include "dfnet/labels.hpp"
#include "dfnet/rfb.hpp"
#include "dfnet/tensor.hpp"
#include "dfnet/weights.hpp"

namespace dfnet {

enum class AuxTap { none, after_layer2, after_layer3 };

AuxTap parse_aux_tap(std::string_view token);
std::string_view to_string(AuxTap tap);

enum class LossKind { weighted_ce, weighted_sq };

LossKind parse_loss_kind(std::string_view token);
std::string_view to_string(LossKind kind);

/// Desk-scale network layout.
///
/// The backbone is a stem convolution followed by four dense blocks. Blocks
/// 1-3 are each preceded by a 2x2 average-pool transition, so the backbone
/// output sits at 1/8 of the input resolution. Block 4 uses dilation 2.
struct ModelConfig {
  std::size_t classes = 6;
  std::size_t growth_rate = 8;
  std::array<std::size_t, 4> layers_per_block{2, 2, 2, 2};
  std::size_t stem_channels = 8;
  std::vector<std::size_t> pyramid_bins{1, 2, 3, 6};
  /// Output channels of each pyramid bin projection.
  std::size_t pyramid_channels = 8;
  std::size_t head_channels = 16;
  std::optional<RfbStructure> rfb;
  PathActivation rfb_activation = PathActivation::clamp;
  AuxTap aux_tap = AuxTap::after_layer2;
  double aux_weight = 0.4;
  std::size_t input_h = 96;
  std::size_t input_w = 96;

  static constexpr std::size_t kDownsampling = 8;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  std::size_t backbone_h() const { return input_h / kDownsampling; }
  std::size_t backbone_w() const { return input_w / kDownsampling; }
};

struct ModelOutput {
  /// Decoder output enlarged to the input size, before softmax.
  Tensor main_logits;
  /// Auxiliary head output enlarged to the input size.
  std::optional<Tensor> aux_logits;
  /// softmax(main_logits), refined by the RFB when one is configured.
  Tensor probabilities;
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// `images` must be (batch, 3, input_h, input_w).
  ModelOutput forward(const Tensor& images) const;

  /// Stable, ordered list of all trainable tensors.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
  /// FNV-1a over parameter names and value bit patterns.
  std::uint64_t parameter_checksum() const;

  /// Spatial extent (h, w) of the feature map the aux head taps.
  std::pair<std::size_t, std::size_t> tap_extent(AuxTap tap) const;

 private:
  struct Conv {
    ConvSpec spec;
    Tensor weight;
    Tensor bias;
    Tensor operator()(const Tensor& x) const;
  };

  Conv make_conv(std::string name, ConvSpec spec, std::mt19937_64& rng);

  ModelConfig cfg_;
  Conv stem_;
  std::array<std::vector<Conv>, 4> blocks_;
  std::vector<Conv> pyramid_;
  Conv head_;
  Conv classifier_;
  std::optional<Conv> aux_head_;
  std::optional<RFB> rfb_;
  std::vector<NamedParameter> params_;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

/// main_loss + aux_weight * aux_loss with the same class weights for both.
///
/// Without an RFB the main loss reads the logits (cross-entropy) or their
/// softmax (squared error). With an RFB it reads the refined probabilities,
/// through their log for cross-entropy. Without an aux tap the result is the
/// main loss tensor itself.
Tensor training_loss(const ModelOutput& output, const LabelBatch& labels, const WeightVector& w,
                     const ModelConfig& cfg, LossKind kind = LossKind::weighted_ce);

/// Classical momentum SGD: v <- momentum * v + g; p <- p - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum);

  /// Updates every parameter from its accumulated gradient. Parameters
  /// without a gradient count as zero-gradient.
  void step(std::span<NamedParameter> params);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

void zero_grads(std::span<NamedParameter> params);

}  // namespace dfnet
