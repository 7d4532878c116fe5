#include "dfnet/labels.hpp"

#include <algorithm>
#include <sstream>

#include "dfnet/errors.hpp"

namespace dfnet {

void validate_labels(const LabelBatch& labels, std::size_t classes) {
  if (labels.data.size() != labels.numel()) {
    throw DataError("label batch holds " + std::to_string(labels.data.size()) +
                    " values for extent " + std::to_string(labels.numel()));
  }
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    const std::int32_t v = labels.data[i];
    if (v < 0 || static_cast<std::size_t>(v) >= classes) {
      const std::size_t b = i / labels.plane();
      const std::size_t y = (i % labels.plane()) / labels.w;
      const std::size_t x = i % labels.w;
      std::ostringstream os;
      os << "label " << v << " outside [0, " << classes << ") at (batch " << b << ", row " << y
         << ", col " << x << ")";
      throw DataError(os.str());
    }
  }
}

Tensor one_hot(const LabelBatch& labels, std::size_t classes) {
  validate_labels(labels, classes);
  const Shape s{labels.n, classes, labels.h, labels.w};
  std::vector<double> values(s.numel(), 0.0);
  for (std::size_t b = 0; b < labels.n; ++b)
    for (std::size_t p = 0; p < labels.plane(); ++p) {
      const auto c = static_cast<std::size_t>(labels.data[b * labels.plane() + p]);
      values[(b * classes + c) * s.plane() + p] = 1.0;
    }
  return Tensor(s, std::move(values));
}

LabelBatch argmax_channels(const Tensor& scores) {
  const Shape s = scores.shape();
  LabelBatch out(s.n, s.h, s.w);
  auto d = scores.data();
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t p = 0; p < s.plane(); ++p) {
      std::size_t best = 0;
      double best_v = d[(b * s.c) * s.plane() + p];
      for (std::size_t c = 1; c < s.c; ++c) {
        const double v = d[(b * s.c + c) * s.plane() + p];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out.data[b * s.plane() + p] = static_cast<std::int32_t>(best);
    }
  return out;
}

LabelBatch stack_labels(const std::vector<const LabelBatch*>& parts) {
  if (parts.empty()) throw DataError("stack_labels: no rasters");
  LabelBatch out;
  out.h = parts.front()->h;
  out.w = parts.front()->w;
  for (const LabelBatch* p : parts) {
    if (p->h != out.h || p->w != out.w) throw DataError("stack_labels: raster size mismatch");
    out.n += p->n;
    out.data.insert(out.data.end(), p->data.begin(), p->data.end());
  }
  return out;
}

}  // namespace dfnet
