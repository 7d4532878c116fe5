#include "dfnet/rfb.hpp"

#include <cmath>
#include <deque>
#include <string>

#include "dfnet/errors.hpp"
#include "dfnet/init.hpp"

namespace dfnet {

RFBSpec RFBSpec::of(RfbStructure structure) {
  const RfbConv near{3, 1, 1, 1};
  const RfbConv dilated{3, 2, 2, 1};
  const RfbPool pool{PoolSpec{3, 1, 1}};
  RFBSpec spec;
  spec.structure = structure;
  switch (structure) {
    case RfbStructure::A:
    case RfbStructure::B:
      spec.layers = {near};
      break;
    case RfbStructure::C:
    case RfbStructure::D:
      spec.layers = {near, dilated};
      break;
    case RfbStructure::E:
    case RfbStructure::F:
      spec.layers = {near, dilated, pool};
      break;
  }
  const bool averaging = structure == RfbStructure::A || structure == RfbStructure::C ||
                         structure == RfbStructure::E;
  spec.fusion = averaging ? FusionMode::average : FusionMode::multiply;
  return spec;
}

std::optional<RfbStructure> parse_rfb_token(std::string_view token) {
  if (token == "none") return std::nullopt;
  if (token.size() == 1 && token[0] >= 'a' && token[0] <= 'f') {
    return static_cast<RfbStructure>(token[0] - 'a');
  }
  throw ConfigError("rfb must be one of none|a|b|c|d|e|f, got '" + std::string(token) + "'");
}

std::string_view rfb_token(std::optional<RfbStructure> structure) {
  static constexpr std::string_view names[] = {"a", "b", "c", "d", "e", "f"};
  if (!structure) return "none";
  return names[static_cast<int>(*structure)];
}

PathActivation parse_path_activation(std::string_view token) {
  if (token == "clamp") return PathActivation::clamp;
  if (token == "sigmoid") return PathActivation::sigmoid;
  throw ConfigError("rfb activation must be clamp|sigmoid, got '" + std::string(token) + "'");
}

std::string_view to_string(PathActivation activation) {
  return activation == PathActivation::clamp ? "clamp" : "sigmoid";
}

RFB::RFB(RFBSpec spec, std::size_t channels, std::uint64_t seed, PathActivation activation)
    : spec_(std::move(spec)), channels_(channels), activation_(activation) {
  if (channels_ == 0) throw ConfigError("rfb: channels must be >= 1");
  auto rng = seeded_rng(seed, 0x5246'4200);
  for (const auto& layer : spec_.layers) {
    const auto* conv = std::get_if<RfbConv>(&layer);
    if (!conv) continue;
    if (conv->s != 1 || 2 * conv->p != conv->d * (conv->k - 1)) {
      throw ConfigError("rfb: conv layers must preserve spatial size");
    }
    const std::size_t fan_in = channels_ * conv->k * conv->k;
    weights_.push_back(uniform_parameter(Shape{channels_, channels_, conv->k, conv->k}, fan_in, rng));
    biases_.push_back(uniform_parameter(Shape{1, channels_, 1, 1}, fan_in, rng));
  }
}

void RFB::check_input(const Tensor& input) const {
  if (input.shape().c != channels_) {
    throw ConfigError("rfb: input has " + std::to_string(input.shape().c) +
                      " channels, block expects " + std::to_string(channels_));
  }
}

Tensor RFB::path(const Tensor& input) const {
  check_input(input);
  Tensor x = input;
  std::size_t conv_index = 0;
  for (const auto& layer : spec_.layers) {
    if (const auto* conv = std::get_if<RfbConv>(&layer)) {
      const ConvSpec cs{channels_, channels_, conv->k, conv->d, conv->p, conv->s};
      x = conv2d(x, weights_[conv_index], biases_[conv_index], cs);
      ++conv_index;
    } else {
      x = avg_pool2d(x, std::get<RfbPool>(layer).pool);
    }
  }
  return activation_ == PathActivation::clamp ? clamp01(x) : sigmoid(x);
}

Tensor RFB::forward_raw(const Tensor& input) const {
  return fuse(input, path(input), spec_.fusion);
}

Tensor RFB::forward(const Tensor& input) const { return renormalize_channels(forward_raw(input)); }

std::vector<NamedParameter> RFB::parameters(std::string_view prefix) const {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const std::string base = std::string(prefix) + "conv" + std::to_string(i);
    out.push_back({base + ".weight", weights_[i]});
    out.push_back({base + ".bias", biases_[i]});
  }
  return out;
}

std::size_t RFB::receptive_radius() const {
  std::size_t r = 0;
  for (const auto& layer : spec_.layers) {
    if (const auto* conv = std::get_if<RfbConv>(&layer)) {
      r += conv->d * (conv->k - 1) / 2;
    } else {
      r += (std::get<RfbPool>(layer).pool.k - 1) / 2;
    }
  }
  return r;
}

RFB build_rfb(const RFBSpec& spec, std::size_t channels, std::uint64_t seed,
              PathActivation activation) {
  return RFB(spec, channels, seed, activation);
}

Tensor apply_rfb(const RFB& rfb, const Tensor& input) { return rfb.forward(input); }

std::vector<std::size_t> boundary_distance(const LabelBatch& labels) {
  std::vector<std::size_t> dist(labels.numel(), kNoBoundary);
  const auto H = static_cast<std::ptrdiff_t>(labels.h);
  const auto W = static_cast<std::ptrdiff_t>(labels.w);
  std::deque<std::ptrdiff_t> queue;
  for (std::size_t b = 0; b < labels.n; ++b) {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(b * labels.plane());
    auto label = [&](std::ptrdiff_t y, std::ptrdiff_t x) { return labels.data[base + y * W + x]; };
    auto neighbours = [&](std::ptrdiff_t y, std::ptrdiff_t x, auto&& fn) {
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t ny = y + dy, nx = x + dx;
          if ((dy || dx) && ny >= 0 && ny < H && nx >= 0 && nx < W) fn(ny, nx);
        }
    };
    // Seeds: pixels touching a different label. From there an 8-connected
    // breadth-first sweep yields the Chebyshev distance.
    for (std::ptrdiff_t y = 0; y < H; ++y)
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        bool seed = false;
        neighbours(y, x, [&](std::ptrdiff_t ny, std::ptrdiff_t nx) {
          seed = seed || label(ny, nx) != label(y, x);
        });
        if (seed) {
          dist[base + y * W + x] = 1;
          queue.push_back(y * W + x);
        }
      }
    while (!queue.empty()) {
      const std::ptrdiff_t i = queue.front();
      queue.pop_front();
      const std::size_t next = dist[base + i] + 1;
      neighbours(i / W, i % W, [&](std::ptrdiff_t ny, std::ptrdiff_t nx) {
        auto& d = dist[base + ny * W + nx];
        if (d == kNoBoundary) {
          d = next;
          queue.push_back(ny * W + nx);
        }
      });
    }
  }
  return dist;
}

BoundaryReport boundary_effect(const RFB& rfb, const Tensor& input, const LabelBatch& labels) {
  const Shape s = input.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
    throw ConfigError("boundary_effect: labels do not match input " + s.str());
  }
  Tensor out;
  {
    NoGradGuard guard;
    out = rfb.forward_raw(input);
  }
  const auto dist = boundary_distance(labels);
  const std::size_t margin = rfb.receptive_radius();
  BoundaryReport report;
  std::vector<double> totals;
  auto x = input.data(), y = out.data();
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t h = margin; h + margin < s.h; ++h)
      for (std::size_t w = margin; w + margin < s.w; ++w) {
        const std::size_t d = dist[b * s.plane() + h * s.w + w];
        if (d == kNoBoundary) continue;
        if (totals.size() <= d) {
          totals.resize(d + 1, 0.0);
          report.pixels.resize(d + 1, 0);
        }
        double change = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) {
          const std::size_t i = s.index(b, c, h, w);
          change += std::abs(y[i] - x[i]);
        }
        totals[d] += change / static_cast<double>(s.c);
        ++report.pixels[d];
      }
  report.mean_change.resize(totals.size(), 0.0);
  for (std::size_t d = 0; d < totals.size(); ++d) {
    if (report.pixels[d] > 0) report.mean_change[d] = totals[d] / static_cast<double>(report.pixels[d]);
  }
  return report;
}

}  // namespace dfnet
