#include "dfnet/metrics.hpp"

#include <numeric>
#include <sstream>

#include "dfnet/csv.hpp"
#include "dfnet/errors.hpp"

namespace dfnet {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ConfigError("confusion matrix class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelBatch& pred, const LabelBatch& truth) {
  if (pred.n != truth.n || pred.h != truth.h || pred.w != truth.w) {
    throw DataError("accumulate: prediction and truth rasters differ in shape");
  }
  validate_labels(pred, cm.classes());
  validate_labels(truth, cm.classes());
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    ++cm.at(static_cast<std::size_t>(truth.data[i]), static_cast<std::size_t>(pred.data[i]));
  }
}

double MetricsReport::mean_acc_from(std::size_t first) const {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t c = first; c < per_class_acc.size(); ++c) {
    if (!in_truth[c]) continue;
    acc += per_class_acc[c];
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

MetricsReport report(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw UsageError("report: empty confusion matrix");
  const std::size_t c = cm.classes();
  MetricsReport r;
  r.per_class_acc.assign(c, 0.0);
  r.per_class_iou.assign(c, 0.0);
  r.in_truth.assign(c, false);
  r.in_union.assign(c, false);
  std::uint64_t trace = 0;
  double acc_sum = 0.0, iou_sum = 0.0;
  std::size_t acc_n = 0, iou_n = 0;
  for (std::size_t i = 0; i < c; ++i) {
    const std::uint64_t tp = cm.at(i, i);
    const std::uint64_t row = cm.row_sum(i), col = cm.col_sum(i);
    trace += tp;
    if (row > 0) {
      r.in_truth[i] = true;
      r.per_class_acc[i] = static_cast<double>(tp) / static_cast<double>(row);
      acc_sum += r.per_class_acc[i];
      ++acc_n;
    }
    if (row + col > 0) {
      r.in_union[i] = true;
      r.per_class_iou[i] = static_cast<double>(tp) / static_cast<double>(row + col - tp);
      iou_sum += r.per_class_iou[i];
      ++iou_n;
    }
  }
  r.pacc = static_cast<double>(trace) / static_cast<double>(total);
  r.mpacc = acc_n ? acc_sum / static_cast<double>(acc_n) : 0.0;
  r.miou = iou_n ? iou_sum / static_cast<double>(iou_n) : 0.0;
  return r;
}

std::string report_csv_header(std::size_t classes) {
  std::ostringstream os;
  os << "run_id,pacc,mpacc,miou";
  for (std::size_t i = 0; i < classes; ++i) os << ",iou_class_" << i;
  return os.str();
}

std::string report_csv_row(const std::string& run_id, const MetricsReport& r) {
  std::ostringstream os;
  os << run_id << ',' << format_double(r.pacc) << ',' << format_double(r.mpacc) << ','
     << format_double(r.miou);
  for (double v : r.per_class_iou) os << ',' << format_double(v);
  return os.str();
}

}  // namespace dfnet
