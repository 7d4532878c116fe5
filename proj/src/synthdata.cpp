#include "dfnet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "dfnet/errors.hpp"
#include "dfnet/image_io.hpp"
#include "dfnet/init.hpp"

namespace dfnet {

Rgb palette(std::size_t cls) {
  switch (cls) {
    case kBackground:
      return {0.2, 0.2, 0.2};
    case kParkingSlot:
      return {0.9, 0.9, 0.9};
    case kWhiteSolid:
    case kWhiteDashed:
      return {1.0, 1.0, 1.0};
    case kYellowSolid:
    case kYellowDashed:
      return {1.0, 0.85, 0.1};
    default:
      throw ConfigError("palette: no colour for class " + std::to_string(cls));
  }
}

void SceneSpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("scene: image must be at least 8x8");
  if (class_count != kSceneClasses) throw ConfigError("scene: generator renders exactly 6 classes");
  if (line_width == 0) throw ConfigError("scene: line_width must be positive");
  if (dash_period < 2) throw ConfigError("scene: dash_period must be >= 2");
  if (!(dash_duty > 0.0 && dash_duty < 1.0)) throw ConfigError("scene: dash_duty must be in (0, 1)");
  if (lines_min > lines_max) throw ConfigError("scene: lines_min exceeds lines_max");
  if (!(noise_std >= 0.0)) throw ConfigError("scene: noise_std must be >= 0");
  for (auto c : absent_classes) {
    if (c <= 0 || static_cast<std::size_t>(c) >= class_count) {
      throw ConfigError("scene: absent class " + std::to_string(c) + " is not a foreground class");
    }
  }
}

namespace {

struct Canvas {
  std::size_t h;
  std::size_t w;
  std::vector<Rgb> color;
  LabelBatch labels;

  Canvas(std::size_t h, std::size_t w) : h(h), w(w), color(h * w, palette(kBackground)), labels(1, h, w) {}

  void stamp(long y, long x, std::size_t brush, std::int32_t cls) {
    const long lo = -static_cast<long>(brush / 2);
    for (long dy = lo; dy < lo + static_cast<long>(brush); ++dy)
      for (long dx = lo; dx < lo + static_cast<long>(brush); ++dx) {
        const long yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
        const std::size_t i = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
        color[i] = palette(static_cast<std::size_t>(cls));
        labels.data[i] = cls;
      }
  }

  /// Bresenham walk from (y0,x0) to (y1,x1); `on(step)` gates each stamp.
  template <typename Gate>
  void line(long y0, long x0, long y1, long x1, std::size_t brush, std::int32_t cls, Gate on) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (std::size_t step = 0;; ++step) {
      if (on(step)) stamp(y0, x0, brush, cls);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

}  // namespace

Scene generate_scene(const SceneSpec& spec, std::size_t index) {
  spec.validate();
  auto rng = seeded_rng(spec.seed, index);
  const long H = static_cast<long>(spec.height), W = static_cast<long>(spec.width);
  auto uniform_int = [&rng](long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); };
  Canvas canvas(spec.height, spec.width);
  const std::size_t on_steps = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(spec.dash_duty * static_cast<double>(spec.dash_period))));

  for (std::int32_t cls = kParkingSlot; cls < static_cast<std::int32_t>(kSceneClasses); ++cls) {
    const bool absent = std::find(spec.absent_classes.begin(), spec.absent_classes.end(), cls) !=
                        spec.absent_classes.end();
    const long strokes = uniform_int(static_cast<long>(spec.lines_min), static_cast<long>(spec.lines_max));
    if (absent) continue;
    for (long k = 0; k < strokes; ++k) {
      if (cls == kParkingSlot) {
        // Open rectangle: two long sides joined at the far end.
        const long sw = uniform_int(W / 5, W / 3), sh = uniform_int(H / 4, H / 2);
        const long y = uniform_int(0, H - sh - 1), x = uniform_int(0, W - sw - 1);
        auto solid = [](std::size_t) { return true; };
        canvas.line(y, x, y + sh, x, spec.line_width, cls, solid);
        canvas.line(y, x + sw, y + sh, x + sw, spec.line_width, cls, solid);
        canvas.line(y + sh, x, y + sh, x + sw, spec.line_width, cls, solid);
        continue;
      }
      // Lane line from one border to the opposite one, mostly vertical or
      // mostly horizontal.
      const bool vertical = uniform_int(0, 1) == 0;
      const long drift = (vertical ? W : H) / 4;
      long y0, x0, y1, x1;
      if (vertical) {
        x0 = uniform_int(0, W - 1);
        x1 = std::clamp(x0 + uniform_int(-drift, drift), 0L, W - 1);
        y0 = 0;
        y1 = H - 1;
      } else {
        y0 = uniform_int(0, H - 1);
        y1 = std::clamp(y0 + uniform_int(-drift, drift), 0L, H - 1);
        x0 = 0;
        x1 = W - 1;
      }
      const bool dashed = cls == kWhiteDashed || cls == kYellowDashed;
      const std::size_t phase = static_cast<std::size_t>(uniform_int(0, static_cast<long>(spec.dash_period) - 1));
      canvas.line(y0, x0, y1, x1, spec.line_width, cls, [&](std::size_t step) {
        return !dashed || (step + phase) % spec.dash_period < on_steps;
      });
    }
  }

  const Shape s{1, 3, spec.height, spec.width};
  std::vector<double> values(s.numel());
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);
  for (std::size_t p = 0; p < s.plane(); ++p) {
    const Rgb& c = canvas.color[p];
    const double rgb[3] = {c.r, c.g, c.b};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double n = spec.noise_std > 0.0 ? noise(rng) : 0.0;
      values[ch * s.plane() + p] = quantize8(rgb[ch] + n);
    }
  }
  return Scene{Tensor(s, std::move(values)), std::move(canvas.labels)};
}

Dataset generate(const SceneSpec& spec, std::size_t n) {
  Dataset data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.push_back(generate_scene(spec, i));
  return data;
}

DatasetSplit split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split: fractions must lie in [0, 1]");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must sum to 1");
  }
  const std::size_t n = data.size();
  auto part = [n](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_val = part(fractions[1]), n_test = part(fractions[2]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = seeded_rng(seed, 0x53504c54);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit out;
  const std::size_t n_train = n - n_val - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.push_back(data[order[i]]);
  }
  return out;
}

double background_fraction(const Dataset& data) {
  std::size_t bg = 0, total = 0;
  for (const auto& s : data) {
    bg += static_cast<std::size_t>(std::count(s.labels.data.begin(), s.labels.data.end(), kBackground));
    total += s.labels.numel();
  }
  return total ? static_cast<double>(bg) / static_cast<double>(total) : 0.0;
}

namespace {
std::string scene_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu.%s", i, ext);
  return buf;
}
}  // namespace

void dump_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < data.size(); ++i) {
    write_ppm(dir / scene_name(i, "ppm"), data[i].image);
    write_pgm(dir / scene_name(i, "pgm"), data[i].labels);
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  for (std::size_t i = 0;; ++i) {
    const auto img = dir / scene_name(i, "ppm");
    if (!std::filesystem::exists(img)) break;
    Scene s{read_ppm(img), read_pgm(dir / scene_name(i, "pgm"))};
    if (s.labels.h != s.image.shape().h || s.labels.w != s.image.shape().w) {
      throw DataError("scene " + std::to_string(i) + ": image and label sizes differ in " + dir.string());
    }
    data.push_back(std::move(s));
  }
  if (data.empty()) throw DataError("no scene_00000.ppm found in " + dir.string());
  return data;
}

std::pair<Tensor, LabelBatch> make_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("make_batch: empty batch");
  const Shape one = data.at(indices.front()).image.shape();
  const Shape s{indices.size(), one.c, one.h, one.w};
  std::vector<double> values;
  values.reserve(s.numel());
  std::vector<const LabelBatch*> labels;
  for (std::size_t i : indices) {
    const Scene& sc = data.at(i);
    if (sc.image.shape() != one) throw DataError("make_batch: scene sizes differ");
    values.insert(values.end(), sc.image.data().begin(), sc.image.data().end());
    labels.push_back(&sc.labels);
  }
  return {Tensor(s, std::move(values)), stack_labels(labels)};
}

}  // namespace dfnet
