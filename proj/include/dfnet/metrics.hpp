#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dfnet/labels.hpp"

namespace dfnet {

/// Pixel counts indexed [truth][prediction].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// Adds one count per pixel at [truth][pred].
void accumulate(ConfusionMatrix& cm, const LabelBatch& pred, const LabelBatch& truth);

struct MetricsReport {
  double pacc = 0.0;
  double mpacc = 0.0;
  double miou = 0.0;
  std::vector<double> per_class_acc;
  std::vector<double> per_class_iou;
  /// Classes with ground-truth pixels (enter mpacc).
  std::vector<bool> in_truth;
  /// Classes with ground-truth or predicted pixels (enter mIoU).
  std::vector<bool> in_union;

  /// Mean per-class accuracy over present classes in [first, classes).
  double mean_acc_from(std::size_t first) const;
};

/// pacc = trace / total. mpacc averages per-class accuracy over classes with
/// ground-truth pixels; mIoU averages IoU over classes seen in truth or
/// prediction. Absent classes report 0 and are left out of the means.
MetricsReport report(const ConfusionMatrix& cm);

/// CSV row: run-id, pacc, mpacc, mIoU, iou_0, ..., iou_{c-1}.
std::string report_csv_header(std::size_t classes);
std::string report_csv_row(const std::string& run_id, const MetricsReport& r);

}  // namespace dfnet
