#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dfnet/labels.hpp"
#include "dfnet/tensor.hpp"

namespace dfnet {

/// Class indices of the parking-lot scene taxonomy.
enum SceneClass : std::int32_t {
  kBackground = 0,
  kParkingSlot = 1,
  kWhiteSolid = 2,
  kWhiteDashed = 3,
  kYellowSolid = 4,
  kYellowDashed = 5,
};

inline constexpr std::size_t kSceneClasses = 6;

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Nominal class colour before noise and 8-bit quantization.
Rgb palette(std::size_t cls);

struct SceneSpec {
  std::size_t height = 96;
  std::size_t width = 96;
  std::size_t class_count = kSceneClasses;
  /// Square brush edge in pixels.
  std::size_t line_width = 3;
  /// Dash cycle length and filled fraction, measured in line steps.
  std::size_t dash_period = 12;
  double dash_duty = 0.5;
  /// Inclusive range of strokes drawn per foreground class.
  std::size_t lines_min = 0;
  std::size_t lines_max = 2;
  double noise_std = 0.02;
  std::uint64_t seed = 1;
  /// Classes never drawn (for exercising the absent-class weight rule).
  std::vector<std::int32_t> absent_classes;

  void validate() const;
};

/// One rendered image (1, 3, H, W) with its label raster (1, H, W).
struct Scene {
  Tensor image;
  LabelBatch labels;
};

using Dataset = std::vector<Scene>;

/// Scene `index` depends only on (spec, index). Images are quantized to 8
/// bits so they survive a PPM round trip unchanged.
Scene generate_scene(const SceneSpec& spec, std::size_t index);
Dataset generate(const SceneSpec& spec, std::size_t n);

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Seeded shuffle, then chunk sizes floor(f_i * n) for val and test with the
/// remainder going to train.
DatasetSplit split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

double background_fraction(const Dataset& data);

/// Writes scene_%05d.ppm / scene_%05d.pgm pairs.
void dump_dataset(const std::filesystem::path& dir, const Dataset& data);
/// Reads consecutive scene_%05d pairs starting at 0.
Dataset load_dataset(const std::filesystem::path& dir);

/// Stacks scenes into a (batch, 3, H, W) tensor and matching label batch.
std::pair<Tensor, LabelBatch> make_batch(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace dfnet
