#include "dfnet/weights.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfnet/errors.hpp"

namespace dfnet {

void ClassHistogram::validate() const {
  if (counts.empty()) throw ConfigError("histogram: zero classes");
  if (total == 0) throw ConfigError("histogram: empty batch");
  const std::uint64_t s = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (s != total) {
    throw ConfigError("histogram: counts sum to " + std::to_string(s) + " but total is " +
                      std::to_string(total));
  }
}

ClassHistogram& ClassHistogram::operator+=(const ClassHistogram& other) {
  if (counts.empty()) counts.assign(other.counts.size(), 0);
  if (counts.size() != other.counts.size()) throw ConfigError("histogram: class count mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  total += other.total;
  return *this;
}

void WeightConfig::validate() const {
  if (!(beta > 0.0) || !(alpha > beta) || !std::isfinite(alpha)) {
    throw ConfigError("weight thresholds need 0 < beta < alpha, got beta=" + std::to_string(beta) +
                      " alpha=" + std::to_string(alpha));
  }
}

ClassHistogram histogram(const LabelBatch& labels, std::size_t classes) {
  if (classes == 0) throw ConfigError("histogram: zero classes");
  if (labels.numel() == 0) throw DataError("histogram: empty batch");
  validate_labels(labels, classes);
  ClassHistogram h;
  h.counts.assign(classes, 0);
  for (std::int32_t v : labels.data) ++h.counts[static_cast<std::size_t>(v)];
  h.total = labels.numel();
  return h;
}

WeightVector dynamic_weights(const ClassHistogram& h, const WeightConfig& cfg) {
  h.validate();
  cfg.validate();
  const std::uint64_t c = h.class_count();
  WeightVector out;
  out.weights.reserve(c);
  for (std::uint64_t n : h.counts) {
    if (n == 0) {
      out.weights.push_back(1.0);
      continue;
    }
    // Integer denominator so the average share maps to exactly 1/2.
    const double raw = static_cast<double>(h.total) / static_cast<double>(2 * c * n);
    out.weights.push_back(std::clamp(raw, cfg.beta, cfg.alpha));
  }
  return out;
}

WeightVector uniform_weights(std::size_t classes) {
  return WeightVector{std::vector<double>(classes, 1.0)};
}

namespace {

void check_weights(const WeightVector& w, std::size_t classes, const char* what) {
  if (w.size() != classes) {
    throw UsageError(std::string(what) + ": " + std::to_string(w.size()) +
                     " weights for " + std::to_string(classes) + " classes");
  }
}

void check_labels(const Shape& s, const LabelBatch& labels, const char* what) {
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
    throw UsageError(std::string(what) + ": labels do not match scores " + s.str());
  }
  validate_labels(labels, s.c);
}

}  // namespace

Tensor weighted_sq_loss(const Tensor& pred, const Tensor& target, const WeightVector& w) {
  const Shape s = pred.shape();
  if (s != target.shape()) {
    throw UsageError("weighted_sq_loss: pred " + s.str() + " vs target " + target.shape().str());
  }
  check_weights(w, s.c, "weighted_sq_loss");
  const double inv = 1.0 / static_cast<double>(s.n * s.plane());
  auto x = pred.data(), y = target.data();
  double total = 0.0;
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      const std::size_t base = (b * s.c + c) * s.plane();
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const double d = x[base + p] - y[base + p];
        acc += d * d;
      }
      total += w[c] * acc;
    }
  auto backward = [pred, target, w, s, inv](std::span<const double>, std::span<const double> g) {
    for (int side = 0; side < 2; ++side) {
      Tensor t = side == 0 ? pred : target;
      if (!t.requires_grad()) continue;
      const double sign = side == 0 ? 1.0 : -1.0;
      auto gt = t.grad_buffer();
      auto x = pred.data(), y = target.data();
      for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t c = 0; c < s.c; ++c) {
          const double k = sign * 2.0 * w[c] * inv * g[0];
          const std::size_t base = (b * s.c + c) * s.plane();
          for (std::size_t p = 0; p < s.plane(); ++p) gt[base + p] += k * (x[base + p] - y[base + p]);
        }
    }
  };
  return Tensor::from_op(Shape{1, 1, 1, 1}, {total * inv}, {pred, target}, backward);
}

Tensor weighted_ce_loss(const Tensor& logits, const LabelBatch& labels, const WeightVector& w) {
  const Shape s = logits.shape();
  check_weights(w, s.c, "weighted_ce_loss");
  check_labels(s, labels, "weighted_ce_loss");
  const std::size_t plane = s.plane();
  const double inv = 1.0 / static_cast<double>(s.n * plane);
  auto x = logits.data();
  // Softmax is kept for the backward pass.
  std::vector<double> probs(s.numel());
  double total = 0.0;
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t base = b * s.c * plane + p;
      double peak = x[base];
      for (std::size_t c = 1; c < s.c; ++c) peak = std::max(peak, x[base + c * plane]);
      double z = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double e = std::exp(x[base + c * plane] - peak);
        probs[base + c * plane] = e;
        z += e;
      }
      for (std::size_t c = 0; c < s.c; ++c) probs[base + c * plane] /= z;
      const auto label = static_cast<std::size_t>(labels.data[b * plane + p]);
      total += w[label] * (std::log(z) + peak - x[base + label * plane]);
    }
  auto backward = [logits, labels, w, s, inv, probs = std::move(probs)](
                      std::span<const double>, std::span<const double> g) {
    Tensor t = logits;
    auto gx = t.grad_buffer();
    const std::size_t plane = s.plane();
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        const auto label = static_cast<std::size_t>(labels.data[b * plane + p]);
        const double k = w[label] * inv * g[0];
        const std::size_t base = b * s.c * plane + p;
        for (std::size_t c = 0; c < s.c; ++c) {
          const std::size_t i = base + c * plane;
          gx[i] += k * (probs[i] - (c == label ? 1.0 : 0.0));
        }
      }
  };
  return Tensor::from_op(Shape{1, 1, 1, 1}, {total * inv}, {logits}, backward);
}

Tensor weighted_nll_loss(const Tensor& log_probs, const LabelBatch& labels,
                         const WeightVector& w) {
  const Shape s = log_probs.shape();
  check_weights(w, s.c, "weighted_nll_loss");
  check_labels(s, labels, "weighted_nll_loss");
  const std::size_t plane = s.plane();
  const double inv = 1.0 / static_cast<double>(s.n * plane);
  auto x = log_probs.data();
  double total = 0.0;
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      const auto label = static_cast<std::size_t>(labels.data[b * plane + p]);
      total -= w[label] * x[(b * s.c + label) * plane + p];
    }
  auto backward = [log_probs, labels, w, s, inv](std::span<const double>,
                                                 std::span<const double> g) {
    Tensor t = log_probs;
    auto gx = t.grad_buffer();
    const std::size_t plane = s.plane();
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        const auto label = static_cast<std::size_t>(labels.data[b * plane + p]);
        gx[(b * s.c + label) * plane + p] -= w[label] * inv * g[0];
      }
  };
  return Tensor::from_op(Shape{1, 1, 1, 1}, {total * inv}, {log_probs}, backward);
}

}  // namespace dfnet
