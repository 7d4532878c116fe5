#include "dfnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <string>

#include <Eigen/Core>

#include "dfnet/errors.hpp"

namespace dfnet {

namespace {

using idx = std::ptrdiff_t;

void require_defined(const Tensor& t, const char* what) {
  if (!t.defined()) throw UsageError(std::string(what) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(what) + ": shape mismatch " + a.shape().str() +
                      " vs " + b.shape().str());
  }
}

// Range of output positions o in [0, out) whose input position o*s + off lands
// in [0, extent).
struct Span1 {
  idx lo;
  idx hi;
};

Span1 valid_range(idx off, idx s, idx extent, idx out) {
  // o*s + off >= 0  ->  o >= ceil(-off / s)
  idx lo = off >= 0 ? 0 : (-off + s - 1) / s;
  // o*s + off <= extent - 1
  idx top = extent - 1 - off;
  idx hi = top < 0 ? 0 : top / s + 1;
  return {std::min(lo, out), std::clamp(hi, std::min(lo, out), out)};
}

template <typename F>
Tensor unary(const Tensor& input, F&& f, Tensor::BackwardFn (*make_bw)(const Tensor&)) {
  std::vector<double> out(input.numel());
  auto x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return Tensor::from_op(input.shape(), std::move(out), {input}, make_bw(input));
}

}  // namespace

std::string_view to_string(FusionMode mode) {
  return mode == FusionMode::average ? "average" : "multiply";
}

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("conv2d: zero channels");
  if (k == 0 || d == 0 || s == 0) throw ConfigError("conv2d: k, d and s must be positive");
}

std::size_t ConvSpec::output_extent(std::size_t extent) const {
  validate();
  const idx span = static_cast<idx>(extent + 2 * p) - static_cast<idx>(d * (k - 1)) - 1;
  if (span < 0) {
    throw ConfigError("conv2d: kernel (k=" + std::to_string(k) + ", d=" + std::to_string(d) +
                      ") does not fit extent " + std::to_string(extent) + " with padding " +
                      std::to_string(p));
  }
  return static_cast<std::size_t>(span) / s + 1;
}

std::size_t PoolSpec::output_extent(std::size_t extent) const {
  if (k == 0 || s == 0) throw ConfigError("avg_pool2d: window and stride must be positive");
  if (extent + 2 * p < k) {
    throw ConfigError("avg_pool2d: window " + std::to_string(k) + " exceeds padded extent " +
                      std::to_string(extent + 2 * p));
  }
  return (extent + 2 * p - k) / s + 1;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Unfolded receptive fields of one image: row r = (ic*K + kh)*K + kw holds, for
// every output position, the input value under that tap (0 in the padding).
struct Im2Col {
  std::size_t H, W, OH, OW, K, D, P, S;

  template <typename Fn>
  void for_each_tap(std::size_t channels, Fn&& fn) const {
    for (std::size_t ic = 0; ic < channels; ++ic)
      for (std::size_t kh = 0; kh < K; ++kh)
        for (std::size_t kw = 0; kw < K; ++kw) {
          const idx off_h = static_cast<idx>(kh * D) - static_cast<idx>(P);
          const idx off_w = static_cast<idx>(kw * D) - static_cast<idx>(P);
          const Span1 rows = valid_range(off_h, static_cast<idx>(S), static_cast<idx>(H), static_cast<idx>(OH));
          const Span1 cols = valid_range(off_w, static_cast<idx>(S), static_cast<idx>(W), static_cast<idx>(OW));
          fn((ic * K + kh) * K + kw, ic, rows, cols, off_h, off_w);
        }
  }

  void unfold(const double* x, std::size_t channels, double* col) const {
    const std::size_t plane = OH * OW;
    const idx s = static_cast<idx>(S);
    for_each_tap(channels, [&](std::size_t r, std::size_t ic, Span1 rows, Span1 cols, idx off_h, idx off_w) {
      double* dst = col + r * plane;
      const double* src = x + ic * H * W;
      const idx ow_n = static_cast<idx>(OW);
      std::fill(dst, dst + rows.lo * ow_n, 0.0);
      for (idx oh = rows.lo; oh < rows.hi; ++oh) {
        const double* srow = src + (oh * s + off_h) * static_cast<idx>(W) + off_w;
        double* drow = dst + oh * ow_n;
        std::fill(drow, drow + cols.lo, 0.0);
        for (idx ow = cols.lo; ow < cols.hi; ++ow) drow[ow] = srow[ow * s];
        std::fill(drow + cols.hi, drow + ow_n, 0.0);
      }
      std::fill(dst + rows.hi * ow_n, dst + plane, 0.0);
    });
  }

  void fold_add(const double* col, std::size_t channels, double* gx) const {
    const std::size_t plane = OH * OW;
    const idx s = static_cast<idx>(S);
    for_each_tap(channels, [&](std::size_t r, std::size_t ic, Span1 rows, Span1 cols, idx off_h, idx off_w) {
      const double* src = col + r * plane;
      double* dst = gx + ic * H * W;
      for (idx oh = rows.lo; oh < rows.hi; ++oh) {
        double* drow = dst + (oh * s + off_h) * static_cast<idx>(W) + off_w;
        const double* srow = src + oh * static_cast<idx>(OW);
        for (idx ow = cols.lo; ow < cols.hi; ++ow) drow[ow * s] += srow[ow];
      }
    });
  }
};

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec) {
  require_defined(input, "conv2d");
  require_defined(weights, "conv2d");
  spec.validate();
  const Shape in = input.shape();
  const Shape ws = weights.shape();
  if (in.c != spec.in_channels) {
    throw ConfigError("conv2d: input has " + std::to_string(in.c) + " channels, spec expects " +
                      std::to_string(spec.in_channels));
  }
  if (ws != Shape{spec.out_channels, spec.in_channels, spec.k, spec.k}) {
    throw ConfigError("conv2d: weights shape " + ws.str() + " does not match spec");
  }
  if (bias.defined() && bias.numel() != spec.out_channels) {
    throw ConfigError("conv2d: bias has " + std::to_string(bias.numel()) + " values, expected " +
                      std::to_string(spec.out_channels));
  }
  const Shape out{in.n, spec.out_channels, spec.output_extent(in.h), spec.output_extent(in.w)};
  const Im2Col geo{in.h, in.w, out.h, out.w, spec.k, spec.d, spec.p, spec.s};
  const std::size_t IC = in.c, OC = out.c;
  const std::size_t R = IC * spec.k * spec.k;
  const std::size_t P = out.plane();

  // Every operand handed to Eigen lives in Eigen-owned (aligned) storage: its
  // vectorized kernels peel loops by address alignment, so operating on
  // arbitrary heap pointers would make the last bits vary from run to run.
  // Unfolded input for every image, kept for the weight gradient.
  auto cols = std::make_shared<RowMatrix>(in.n * R, P);
  std::vector<double> result(out.numel());
  auto x = input.data();
  auto b = bias.defined() ? bias.data() : std::span<const double>{};
  const RowMatrix wmat = ConstMatrixMap(weights.data().data(), OC, R);
  RowMatrix o(OC, P);
  for (std::size_t n = 0; n < in.n; ++n) {
    double* col = cols->data() + n * R * P;
    geo.unfold(x.data() + n * IC * in.plane(), IC, col);
    o.noalias() = wmat * ConstMatrixMap(col, R, P);
    double* dst = result.data() + n * OC * P;
    for (std::size_t oc = 0; oc < OC; ++oc) {
      const double shift = b.empty() ? 0.0 : b[oc];
      for (std::size_t p = 0; p < P; ++p) dst[oc * P + p] = o(oc, p) + shift;
    }
  }

  auto backward = [input, weights, bias, in, geo, IC, OC, R, P, cols](
                      std::span<const double>, std::span<const double> g) {
    Tensor x = input, wt = weights, b = bias;
    if (b.defined() && b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t oc = 0; oc < OC; ++oc) {
          const double* row = g.data() + (n * OC + oc) * P;
          gb[oc] = std::accumulate(row, row + P, gb[oc]);
        }
    }
    const bool need_w = wt.requires_grad(), need_x = x.requires_grad();
    if (!need_w && !need_x) return;
    RowMatrix go(OC, P), gw, gcol;
    if (need_w) gw = RowMatrix::Zero(OC, R);
    const RowMatrix wmat = need_x ? RowMatrix(ConstMatrixMap(wt.data().data(), OC, R)) : RowMatrix();
    std::span<double> gx = need_x ? x.grad_buffer() : std::span<double>{};
    for (std::size_t n = 0; n < in.n; ++n) {
      go = ConstMatrixMap(g.data() + n * OC * P, OC, P);
      if (need_w) gw.noalias() += go * ConstMatrixMap(cols->data() + n * R * P, R, P).transpose();
      if (need_x) {
        gcol.noalias() = wmat.transpose() * go;
        geo.fold_add(gcol.data(), IC, gx.data() + n * IC * in.plane());
      }
    }
    if (need_w) {
      auto dw = wt.grad_buffer();
      for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += gw.data()[i];
    }
  };
  std::vector<Tensor> inputs{input, weights};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::from_op(out, std::move(result), std::move(inputs), backward);
}

Tensor avg_pool2d(const Tensor& input, const PoolSpec& spec) {
  require_defined(input, "avg_pool2d");
  const Shape in = input.shape();
  const Shape out{in.n, in.c, spec.output_extent(in.h), spec.output_extent(in.w)};
  const idx H = static_cast<idx>(in.h), W = static_cast<idx>(in.w);
  const idx K = static_cast<idx>(spec.k), P = static_cast<idx>(spec.p),
            S = static_cast<idx>(spec.s);
  const double inv = 1.0 / static_cast<double>(spec.k * spec.k);

  auto visit = [=](idx oh, idx ow, auto&& body) {
    const idx h0 = oh * S - P, w0 = ow * S - P;
    for (idx ih = std::max<idx>(h0, 0); ih < std::min(h0 + K, H); ++ih)
      for (idx iw = std::max<idx>(w0, 0); iw < std::min(w0 + K, W); ++iw) body(ih * W + iw);
  };

  std::vector<double> result(out.numel());
  auto x = input.data();
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const double* xp = x.data() + plane * in.plane();
    double* op = result.data() + plane * out.plane();
    for (idx oh = 0; oh < static_cast<idx>(out.h); ++oh)
      for (idx ow = 0; ow < static_cast<idx>(out.w); ++ow) {
        double acc = 0.0;
        visit(oh, ow, [&](idx i) { acc += xp[i]; });
        op[oh * static_cast<idx>(out.w) + ow] = acc * inv;
      }
  }
  auto backward = [input, in, out, inv, visit](std::span<const double>,
                                               std::span<const double> g) {
    Tensor x = input;
    auto gx = x.grad_buffer();
    for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
      double* gp = gx.data() + plane * in.plane();
      const double* go = g.data() + plane * out.plane();
      for (idx oh = 0; oh < static_cast<idx>(out.h); ++oh)
        for (idx ow = 0; ow < static_cast<idx>(out.w); ++ow) {
          const double v = go[oh * static_cast<idx>(out.w) + ow] * inv;
          visit(oh, ow, [&](idx i) { gp[i] += v; });
        }
    }
  };
  return Tensor::from_op(out, std::move(result), {input}, backward);
}

Tensor adaptive_avg_pool(const Tensor& input, std::size_t bins_h, std::size_t bins_w) {
  require_defined(input, "adaptive_avg_pool");
  const Shape in = input.shape();
  if (bins_h == 0 || bins_w == 0) throw ConfigError("adaptive_avg_pool: zero bins");
  if (bins_h > in.h || bins_w > in.w) {
    throw ConfigError("adaptive_avg_pool: bins (" + std::to_string(bins_h) + ", " +
                      std::to_string(bins_w) + ") exceed input " + in.str());
  }
  const Shape out{in.n, in.c, bins_h, bins_w};
  auto bounds = [](std::size_t i, std::size_t bins, std::size_t extent) {
    const std::size_t lo = (i * extent) / bins;
    const std::size_t hi = ((i + 1) * extent + bins - 1) / bins;
    return std::pair{lo, hi};
  };
  std::vector<double> result(out.numel());
  auto x = input.data();
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const double* xp = x.data() + plane * in.plane();
    for (std::size_t bh = 0; bh < bins_h; ++bh) {
      auto [h0, h1] = bounds(bh, bins_h, in.h);
      for (std::size_t bw = 0; bw < bins_w; ++bw) {
        auto [w0, w1] = bounds(bw, bins_w, in.w);
        double acc = 0.0;
        for (std::size_t h = h0; h < h1; ++h)
          for (std::size_t w = w0; w < w1; ++w) acc += xp[h * in.w + w];
        result[plane * out.plane() + bh * bins_w + bw] =
            acc / static_cast<double>((h1 - h0) * (w1 - w0));
      }
    }
  }
  auto backward = [input, in, out, bounds](std::span<const double>, std::span<const double> g) {
    Tensor x = input;
    auto gx = x.grad_buffer();
    for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
      double* gp = gx.data() + plane * in.plane();
      for (std::size_t bh = 0; bh < out.h; ++bh) {
        auto [h0, h1] = bounds(bh, out.h, in.h);
        for (std::size_t bw = 0; bw < out.w; ++bw) {
          auto [w0, w1] = bounds(bw, out.w, in.w);
          const double v = g[plane * out.plane() + bh * out.w + bw] /
                           static_cast<double>((h1 - h0) * (w1 - w0));
          for (std::size_t h = h0; h < h1; ++h)
            for (std::size_t w = w0; w < w1; ++w) gp[h * in.w + w] += v;
        }
      }
    }
  };
  return Tensor::from_op(out, std::move(result), {input}, backward);
}

namespace {

struct Lerp {
  std::size_t i0;
  std::size_t i1;
  double t;
};

std::vector<Lerp> align_corners_axis(std::size_t in, std::size_t out) {
  std::vector<Lerp> axis(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src =
        out > 1 ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1)
                : 0.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    axis[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return axis;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_defined(input, "bilinear_upsample");
  const Shape in = input.shape();
  if (in.h == 0 || in.w == 0) throw ConfigError("bilinear_upsample: empty input");
  if (out_h < in.h || out_w < in.w) {
    throw ConfigError("bilinear_upsample: target (" + std::to_string(out_h) + ", " +
                      std::to_string(out_w) + ") is smaller than input " + in.str());
  }
  const Shape out{in.n, in.c, out_h, out_w};
  auto ys = align_corners_axis(in.h, out_h);
  auto xs = align_corners_axis(in.w, out_w);
  std::vector<double> result(out.numel());
  auto x = input.data();
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const double* xp = x.data() + plane * in.plane();
    double* op = result.data() + plane * out.plane();
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Lerp& ly = ys[oy];
      const double* r0 = xp + ly.i0 * in.w;
      const double* r1 = xp + ly.i1 * in.w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Lerp& lx = xs[ox];
        const double top = r0[lx.i0] * (1.0 - lx.t) + r0[lx.i1] * lx.t;
        const double bot = r1[lx.i0] * (1.0 - lx.t) + r1[lx.i1] * lx.t;
        op[oy * out_w + ox] = top * (1.0 - ly.t) + bot * ly.t;
      }
    }
  }
  auto backward = [input, in, out, ys = std::move(ys), xs = std::move(xs)](
                      std::span<const double>, std::span<const double> g) {
    Tensor x = input;
    auto gx = x.grad_buffer();
    for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
      double* gp = gx.data() + plane * in.plane();
      const double* go = g.data() + plane * out.plane();
      for (std::size_t oy = 0; oy < out.h; ++oy) {
        const Lerp& ly = ys[oy];
        double* r0 = gp + ly.i0 * in.w;
        double* r1 = gp + ly.i1 * in.w;
        for (std::size_t ox = 0; ox < out.w; ++ox) {
          const Lerp& lx = xs[ox];
          const double v = go[oy * out.w + ox];
          const double top = v * (1.0 - ly.t), bot = v * ly.t;
          r0[lx.i0] += top * (1.0 - lx.t);
          r0[lx.i1] += top * lx.t;
          r1[lx.i0] += bot * (1.0 - lx.t);
          r1[lx.i1] += bot * lx.t;
        }
      }
    }
  };
  return Tensor::from_op(out, std::move(result), {input}, backward);
}

Tensor fuse(const Tensor& a, const Tensor& b, FusionMode mode) {
  require_defined(a, "fuse");
  require_defined(b, "fuse");
  require_same_shape(a, b, "fuse");
  std::vector<double> result(a.numel());
  auto x = a.data(), y = b.data();
  if (mode == FusionMode::average) {
    for (std::size_t i = 0; i < result.size(); ++i) result[i] = 0.5 * (x[i] + y[i]);
  } else {
    for (std::size_t i = 0; i < result.size(); ++i) result[i] = x[i] * y[i];
  }
  auto backward = [a, b, mode](std::span<const double>, std::span<const double> g) {
    Tensor ta = a, tb = b;
    for (int side = 0; side < 2; ++side) {
      Tensor& self = side == 0 ? ta : tb;
      const Tensor& other = side == 0 ? tb : ta;
      if (!self.requires_grad()) continue;
      auto gs = self.grad_buffer();
      if (mode == FusionMode::average) {
        for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += 0.5 * g[i];
      } else {
        auto od = other.data();
        for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += od[i] * g[i];
      }
    }
  };
  return Tensor::from_op(a.shape(), std::move(result), {a, b}, backward);
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  Shape out = parts.front().shape();
  out.c = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat_channels");
    const Shape s = p.shape();
    if (s.n != out.n || s.h != out.h || s.w != out.w) {
      throw ConfigError("concat_channels: extent mismatch " + s.str() + " vs " +
                        parts.front().shape().str());
    }
    out.c += s.c;
  }
  std::vector<double> result(out.numel());
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    auto d = p.data();
    for (std::size_t n = 0; n < s.n; ++n)
      std::copy_n(d.data() + n * s.c * s.plane(), s.c * s.plane(),
                  result.data() + (n * out.c + offset) * out.plane());
    offset += s.c;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  auto backward = [inputs, out](std::span<const double>, std::span<const double> g) {
    std::size_t offset = 0;
    for (Tensor p : inputs) {
      const Shape s = p.shape();
      if (p.requires_grad()) {
        auto gp = p.grad_buffer();
        for (std::size_t n = 0; n < s.n; ++n) {
          const double* src = g.data() + (n * out.c + offset) * out.plane();
          double* dst = gp.data() + n * s.c * s.plane();
          for (std::size_t i = 0; i < s.c * s.plane(); ++i) dst[i] += src[i];
        }
      }
      offset += s.c;
    }
  };
  return Tensor::from_op(out, std::move(result), inputs, backward);
}

Tensor relu(const Tensor& input) {
  require_defined(input, "relu");
  return unary(
      input, [](double v) { return v < 0.0 ? 0.0 : v; },  // NaN passes through
      [](const Tensor& x) -> Tensor::BackwardFn {
        return [x](std::span<const double>, std::span<const double> g) {
          Tensor t = x;
          auto gx = t.grad_buffer();
          auto xd = t.data();
          for (std::size_t i = 0; i < gx.size(); ++i)
            if (xd[i] > 0.0) gx[i] += g[i];
        };
      });
}

Tensor sigmoid(const Tensor& input) {
  require_defined(input, "sigmoid");
  return unary(
      input, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](const Tensor& x) -> Tensor::BackwardFn {
        return [x](std::span<const double> y, std::span<const double> g) {
          Tensor t = x;
          auto gx = t.grad_buffer();
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        };
      });
}

Tensor clamp01(const Tensor& input) {
  require_defined(input, "clamp01");
  return unary(
      input, [](double v) { return std::clamp(v, 0.0, 1.0); },
      [](const Tensor& x) -> Tensor::BackwardFn {
        return [x](std::span<const double>, std::span<const double> g) {
          Tensor t = x;
          auto gx = t.grad_buffer();
          auto xd = t.data();
          for (std::size_t i = 0; i < gx.size(); ++i)
            if (xd[i] > 0.0 && xd[i] < 1.0) gx[i] += g[i];
        };
      });
}

Tensor log_floor(const Tensor& input, double eps) {
  require_defined(input, "log_floor");
  std::vector<double> result(input.numel());
  auto x = input.data();
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = std::log(std::max(x[i], eps));
  auto backward = [input, eps](std::span<const double>, std::span<const double> g) {
    Tensor t = input;
    auto gx = t.grad_buffer();
    auto xd = t.data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xd[i] > eps) gx[i] += g[i] / xd[i];
  };
  return Tensor::from_op(input.shape(), std::move(result), {input}, backward);
}

Tensor softmax_channels(const Tensor& input) {
  require_defined(input, "softmax_channels");
  const Shape s = input.shape();
  std::vector<double> result(s.numel());
  auto x = input.data();
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const std::size_t base = n * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      double peak = x[base + p];
      for (std::size_t c = 1; c < s.c; ++c) peak = std::max(peak, x[base + c * plane + p]);
      double total = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double e = std::exp(x[base + c * plane + p] - peak);
        result[base + c * plane + p] = e;
        total += e;
      }
      for (std::size_t c = 0; c < s.c; ++c) result[base + c * plane + p] /= total;
    }
  }
  auto backward = [input, s](std::span<const double> y, std::span<const double> g) {
    Tensor t = input;
    auto gx = t.grad_buffer();
    const std::size_t plane = s.plane();
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = n * s.c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) dot += g[base + c * plane + p] * y[base + c * plane + p];
        for (std::size_t c = 0; c < s.c; ++c) {
          const std::size_t i = base + c * plane + p;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  };
  return Tensor::from_op(s, std::move(result), {input}, backward);
}

Tensor renormalize_channels(const Tensor& input, double eps) {
  require_defined(input, "renormalize_channels");
  const Shape s = input.shape();
  const std::size_t plane = s.plane();
  std::vector<double> result(s.numel());
  std::vector<double> denom(s.n * plane);
  auto x = input.data();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      double total = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) total += x[(n * s.c + c) * plane + p];
      // A vanishing channel vector has no direction left; fall back to uniform.
      const bool floored = !(total > eps);
      denom[n * plane + p] = floored ? 0.0 : total;
      for (std::size_t c = 0; c < s.c; ++c)
        result[(n * s.c + c) * plane + p] =
            floored ? 1.0 / static_cast<double>(s.c) : x[(n * s.c + c) * plane + p] / total;
    }
  auto backward = [input, s, denom = std::move(denom)](std::span<const double> y, std::span<const double> g) {
    Tensor t = input;
    auto gx = t.grad_buffer();
    const std::size_t plane = s.plane();
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = denom[n * plane + p];
        if (d == 0.0) continue;  // uniform fallback is constant
        double dot = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) {
          const std::size_t i = (n * s.c + c) * plane + p;
          dot += g[i] * y[i];
        }
        for (std::size_t c = 0; c < s.c; ++c) {
          const std::size_t i = (n * s.c + c) * plane + p;
          gx[i] += (g[i] - dot) / d;
        }
      }
  };
  return Tensor::from_op(s, std::move(result), {input}, backward);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> result(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = x[i] + y[i];
  auto backward = [a, b](std::span<const double>, std::span<const double> g) {
    for (Tensor t : {a, b}) {
      if (!t.requires_grad()) continue;
      auto gt = t.grad_buffer();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  };
  return Tensor::from_op(a.shape(), std::move(result), {a, b}, backward);
}

Tensor mul(const Tensor& a, const Tensor& b) { return fuse(a, b, FusionMode::multiply); }

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> result(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = x[i] * factor;
  auto backward = [a, factor](std::span<const double>, std::span<const double> g) {
    Tensor t = a;
    auto gt = t.grad_buffer();
    for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i] * factor;
  };
  return Tensor::from_op(a.shape(), std::move(result), {a}, backward);
}

Tensor transpose_hw(const Tensor& input) {
  require_defined(input, "transpose_hw");
  const Shape s = input.shape();
  const Shape out{s.n, s.c, s.w, s.h};
  std::vector<double> result(s.numel());
  auto x = input.data();
  for (std::size_t pl = 0; pl < s.n * s.c; ++pl)
    for (std::size_t h = 0; h < s.h; ++h)
      for (std::size_t w = 0; w < s.w; ++w)
        result[pl * s.plane() + w * s.h + h] = x[pl * s.plane() + h * s.w + w];
  auto backward = [input, s](std::span<const double>, std::span<const double> g) {
    Tensor t = input;
    auto gx = t.grad_buffer();
    for (std::size_t pl = 0; pl < s.n * s.c; ++pl)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w)
          gx[pl * s.plane() + h * s.w + w] += g[pl * s.plane() + w * s.h + h];
  };
  return Tensor::from_op(out, std::move(result), {input}, backward);
}

Tensor sum(const Tensor& input) {
  require_defined(input, "sum");
  double total = 0.0;
  for (double v : input.data()) total += v;
  auto backward = [input](std::span<const double>, std::span<const double> g) {
    Tensor t = input;
    for (double& v : t.grad_buffer()) v += g[0];
  };
  return Tensor::from_op(Shape{1, 1, 1, 1}, {total}, {input}, backward);
}

Tensor mean(const Tensor& input) {
  require_defined(input, "mean");
  if (input.numel() == 0) throw UsageError("mean of empty tensor");
  return scale(sum(input), 1.0 / static_cast<double>(input.numel()));
}

}  // namespace dfnet
