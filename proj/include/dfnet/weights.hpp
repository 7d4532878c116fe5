#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dfnet/labels.hpp"
#include "dfnet/tensor.hpp"

namespace dfnet {

/// Per-class pixel counts of one batch.
struct ClassHistogram {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  std::size_t class_count() const { return counts.size(); }
  /// Throws ConfigError unless counts sum to total, total > 0 and c > 0.
  void validate() const;

  ClassHistogram& operator+=(const ClassHistogram& other);
  friend bool operator==(const ClassHistogram&, const ClassHistogram&) = default;
};

/// Lower (beta) and upper (alpha) clipping thresholds of the class weights.
struct WeightConfig {
  double beta = 0.1;
  double alpha = 5.0;

  /// Requires 0 < beta < alpha.
  void validate() const;
};

struct WeightVector {
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }
};

ClassHistogram histogram(const LabelBatch& labels, std::size_t classes);

/// Batch-adaptive class weights.
///
/// Absent classes (n_i = 0) get exactly 1; that rule wins over clipping, so
/// the result may legitimately sit outside [beta, alpha]. Every present class
/// gets clamp(N / (2 c n_i), beta, alpha). A class holding exactly the average
/// share N/c therefore weighs 1/2.
WeightVector dynamic_weights(const ClassHistogram& h, const WeightConfig& cfg);

WeightVector uniform_weights(std::size_t classes);

/// Squared error between probability maps and one-hot targets, each channel's
/// term scaled by its class weight, summed over channels and averaged over
/// batch * H * W pixels.
Tensor weighted_sq_loss(const Tensor& pred, const Tensor& target, const WeightVector& w);

/// Mean over pixels of w[label] * -log softmax(logits)[label].
Tensor weighted_ce_loss(const Tensor& logits, const LabelBatch& labels, const WeightVector& w);

/// Mean over pixels of w[label] * -log_probs[label]; for inputs that are
/// already log-probabilities.
Tensor weighted_nll_loss(const Tensor& log_probs, const LabelBatch& labels,
                         const WeightVector& w);

}  // namespace dfnet
