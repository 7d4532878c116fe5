#include "dfnet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "dfnet/errors.hpp"
#include "dfnet/ops.hpp"

namespace dfnet {

AuxTap parse_aux_tap(std::string_view token) {
  if (token == "none") return AuxTap::none;
  if (token == "after_layer2") return AuxTap::after_layer2;
  if (token == "after_layer3") return AuxTap::after_layer3;
  throw ConfigError("aux tap must be none|after_layer2|after_layer3, got '" + std::string(token) +
                    "'");
}

std::string_view to_string(AuxTap tap) {
  switch (tap) {
    case AuxTap::none:
      return "none";
    case AuxTap::after_layer2:
      return "after_layer2";
    case AuxTap::after_layer3:
      return "after_layer3";
  }
  return "none";
}

LossKind parse_loss_kind(std::string_view token) {
  if (token == "weighted_ce") return LossKind::weighted_ce;
  if (token == "weighted_sq") return LossKind::weighted_sq;
  throw ConfigError("loss must be weighted_ce|weighted_sq, got '" + std::string(token) + "'");
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::weighted_ce ? "weighted_ce" : "weighted_sq";
}

void ModelConfig::validate() const {
  if (classes < 2) throw ConfigError("model: need at least 2 classes");
  if (growth_rate == 0 || stem_channels == 0 || pyramid_channels == 0 || head_channels == 0) {
    throw ConfigError("model: channel counts must be positive");
  }
  for (std::size_t n : layers_per_block) {
    if (n == 0) throw ConfigError("model: every dense block needs at least one layer");
  }
  if (input_h == 0 || input_w == 0 || input_h % kDownsampling || input_w % kDownsampling) {
    throw ConfigError("model: input size " + std::to_string(input_h) + "x" +
                      std::to_string(input_w) + " must be a positive multiple of " +
                      std::to_string(kDownsampling));
  }
  if (pyramid_bins.empty()) throw ConfigError("model: pyramid needs at least one bin size");
  for (std::size_t b : pyramid_bins) {
    if (b == 0 || b > backbone_h() || b > backbone_w()) {
      throw ConfigError("model: pyramid bin " + std::to_string(b) + " exceeds backbone output " +
                        std::to_string(backbone_h()) + "x" + std::to_string(backbone_w()));
    }
  }
  if (!(aux_weight >= 0.0 && aux_weight <= 1.0)) {
    throw ConfigError("model: aux_weight must lie in [0, 1]");
  }
}

Tensor Model::Conv::operator()(const Tensor& x) const { return conv2d(x, weight, bias, spec); }

Model::Conv Model::make_conv(std::string name, ConvSpec spec, std::mt19937_64& rng) {
  const std::size_t fan_in = spec.in_channels * spec.k * spec.k;
  Conv conv{spec,
            uniform_parameter(Shape{spec.out_channels, spec.in_channels, spec.k, spec.k}, fan_in, rng),
            uniform_parameter(Shape{1, spec.out_channels, 1, 1}, fan_in, rng)};
  params_.push_back({name + ".weight", conv.weight});
  params_.push_back({name + ".bias", conv.bias});
  return conv;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  auto rng = seeded_rng(seed, 0x4d4f'4445);
  stem_ = make_conv("stem", {3, cfg_.stem_channels, 3, 1, 1, 1}, rng);
  std::size_t channels = cfg_.stem_channels;
  std::array<std::size_t, 4> block_out{};
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t dilation = b == 3 ? 2 : 1;
    for (std::size_t l = 0; l < cfg_.layers_per_block[b]; ++l) {
      const std::string name = "layer" + std::to_string(b + 1) + "." + std::to_string(l);
      blocks_[b].push_back(
          make_conv(name, {channels, cfg_.growth_rate, 3, dilation, dilation, 1}, rng));
      channels += cfg_.growth_rate;
    }
    block_out[b] = channels;
  }
  for (std::size_t i = 0; i < cfg_.pyramid_bins.size(); ++i) {
    pyramid_.push_back(make_conv("pyramid." + std::to_string(i),
                                 {channels, cfg_.pyramid_channels, 1, 1, 0, 1}, rng));
  }
  const std::size_t fused = channels + cfg_.pyramid_bins.size() * cfg_.pyramid_channels;
  head_ = make_conv("head", {fused, cfg_.head_channels, 3, 1, 1, 1}, rng);
  classifier_ = make_conv("classifier", {cfg_.head_channels, cfg_.classes, 1, 1, 0, 1}, rng);
  if (cfg_.aux_tap != AuxTap::none) {
    const std::size_t tap_channels = cfg_.aux_tap == AuxTap::after_layer2 ? block_out[1] : block_out[2];
    aux_head_ = make_conv("aux", {tap_channels, cfg_.classes, 1, 1, 0, 1}, rng);
  }
  if (cfg_.rfb) {
    rfb_.emplace(RFBSpec::of(*cfg_.rfb), cfg_.classes, seed, cfg_.rfb_activation);
    for (auto& p : rfb_->parameters("rfb.")) params_.push_back(std::move(p));
  }
}

ModelOutput Model::forward(const Tensor& images) const {
  const Shape s = images.shape();
  if (s.c != 3 || s.h != cfg_.input_h || s.w != cfg_.input_w || s.n == 0) {
    throw UsageError("model: expected images (batch, 3, " + std::to_string(cfg_.input_h) + ", " +
                     std::to_string(cfg_.input_w) + "), got " + s.str());
  }
  Tensor x = relu(stem_(images));
  Tensor tap2, tap3;
  for (std::size_t b = 0; b < 4; ++b) {
    if (b < 3) x = avg_pool2d(x, PoolSpec{2, 0, 2});
    std::vector<Tensor> features{x};
    for (const Conv& layer : blocks_[b]) {
      Tensor in = features.size() == 1 ? features.front() : concat_channels(features);
      features.push_back(relu(layer(in)));
    }
    x = concat_channels(features);
    if (b == 1) tap2 = x;
    if (b == 2) tap3 = x;
  }

  const std::size_t bh = cfg_.backbone_h(), bw = cfg_.backbone_w();
  std::vector<Tensor> pyramid{x};
  for (std::size_t i = 0; i < pyramid_.size(); ++i) {
    const std::size_t bins = cfg_.pyramid_bins[i];
    Tensor pooled = relu(pyramid_[i](adaptive_avg_pool(x, bins, bins)));
    pyramid.push_back(bilinear_upsample(pooled, bh, bw));
  }
  Tensor head = relu(head_(concat_channels(pyramid)));
  Tensor logits = classifier_(head);

  ModelOutput out;
  out.main_logits = bilinear_upsample(logits, cfg_.input_h, cfg_.input_w);
  Tensor probs = softmax_channels(out.main_logits);
  out.probabilities = rfb_ ? rfb_->forward(probs) : probs;
  if (aux_head_) {
    const Tensor& tap = cfg_.aux_tap == AuxTap::after_layer2 ? tap2 : tap3;
    out.aux_logits = bilinear_upsample((*aux_head_)(tap), cfg_.input_h, cfg_.input_w);
  }
  return out;
}

std::vector<NamedParameter> Model::parameters() const { return params_; }

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.numel();
  return total;
}

std::uint64_t Model::parameter_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t byte) {
    h ^= byte;
    h *= 0x100000001b3ull;
  };
  for (const auto& p : params_) {
    for (char ch : p.name) mix(static_cast<unsigned char>(ch));
    for (double v : p.value.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) mix((bits >> (8 * i)) & 0xff);
    }
  }
  return h;
}

std::pair<std::size_t, std::size_t> Model::tap_extent(AuxTap tap) const {
  switch (tap) {
    case AuxTap::after_layer2:
      return {cfg_.input_h / 4, cfg_.input_w / 4};
    case AuxTap::after_layer3:
      return {cfg_.input_h / 8, cfg_.input_w / 8};
    case AuxTap::none:
      break;
  }
  return {0, 0};
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) { return Model(cfg, seed); }

Tensor training_loss(const ModelOutput& output, const LabelBatch& labels, const WeightVector& w,
                     const ModelConfig& cfg, LossKind kind) {
  const std::size_t c = cfg.classes;
  auto loss_from_logits = [&](const Tensor& logits) {
    if (kind == LossKind::weighted_ce) return weighted_ce_loss(logits, labels, w);
    return weighted_sq_loss(softmax_channels(logits), one_hot(labels, c), w);
  };
  Tensor main;
  if (cfg.rfb) {
    main = kind == LossKind::weighted_ce
               ? weighted_nll_loss(log_floor(output.probabilities), labels, w)
               : weighted_sq_loss(output.probabilities, one_hot(labels, c), w);
  } else {
    main = loss_from_logits(output.main_logits);
  }
  if (cfg.aux_tap == AuxTap::none || !output.aux_logits) return main;
  const Shape& aux = output.aux_logits->shape();
  if (aux.h != labels.h || aux.w != labels.w) {
    throw UsageError("training_loss: aux logits " + aux.str() + " not at label resolution");
  }
  return add(main, scale(loss_from_logits(*output.aux_logits), cfg.aux_weight));
}

SgdMomentum::SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("sgd: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0, 1)");
}

void SgdMomentum::step(std::span<NamedParameter> params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.emplace_back(p.value.numel(), 0.0);
  }
  if (velocity_.size() != params.size()) throw UsageError("sgd: parameter list changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].value.mutable_data();
    auto grad = params[i].value.grad();
    auto& v = velocity_[i];
    if (v.size() != values.size()) throw UsageError("sgd: parameter " + params[i].name + " resized");
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      v[j] = momentum_ * v[j] + g;
      values[j] -= lr_ * v[j];
    }
  }
}

void zero_grads(std::span<NamedParameter> params) {
  for (auto& p : params) p.value.zero_grad();
}

}  // namespace dfnet
