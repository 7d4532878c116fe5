#include "dfnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "dfnet/errors.hpp"

namespace dfnet {

namespace {

struct Netpbm {
  std::size_t width = 0;
  std::size_t height = 0;
  std::string pixels;
};

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  return f;
}

Netpbm read_netpbm(const std::filesystem::path& path, std::string_view magic, std::size_t channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) { throw DataError(path.string() + ": " + why); };
  // Header tokens are separated by whitespace; '#' starts a comment line.
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail("truncated header");
    return bytes.substr(start, pos - start);
  };
  auto number = [&]() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      fail("bad header field '" + t + "'");
    }
    return static_cast<std::size_t>(std::stoull(t));
  };
  if (token() != magic) fail("expected " + std::string(magic) + " magic");
  Netpbm img;
  img.width = number();
  img.height = number();
  const std::size_t maxval = number();
  if (maxval == 0 || maxval > 255) fail("only 8-bit maxval is supported");
  ++pos;  // single whitespace byte before raster
  const std::size_t need = img.width * img.height * channels;
  if (bytes.size() < pos + need) fail("truncated raster");
  img.pixels = bytes.substr(pos, need);
  return img;
}

}  // namespace

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw UsageError("write_ppm: expected (1, 3, H, W), got " + s.str());
  auto f = open_out(path);
  f << "P6\n" << s.w << ' ' << s.h << "\n255\n";
  auto d = image.data();
  std::string raster(s.plane() * 3, '\0');
  for (std::size_t p = 0; p < s.plane(); ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(d[c * s.plane() + p], 0.0, 1.0);
      raster[p * 3 + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  f.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  const Netpbm img = read_netpbm(path, "P6", 3);
  const Shape s{1, 3, img.height, img.width};
  std::vector<double> values(s.numel());
  for (std::size_t p = 0; p < s.plane(); ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      values[c * s.plane() + p] = static_cast<unsigned char>(img.pixels[p * 3 + c]) / 255.0;
    }
  return Tensor(s, std::move(values));
}

void write_pgm(const std::filesystem::path& path, const LabelBatch& labels) {
  if (labels.n != 1) throw UsageError("write_pgm: expected a single raster");
  auto f = open_out(path);
  f << "P5\n" << labels.w << ' ' << labels.h << "\n255\n";
  std::string raster(labels.plane(), '\0');
  for (std::size_t i = 0; i < raster.size(); ++i) {
    const std::int32_t v = labels.data[i];
    if (v < 0 || v > 255) throw DataError("write_pgm: label " + std::to_string(v) + " exceeds 8 bits");
    raster[i] = static_cast<char>(static_cast<unsigned char>(v));
  }
  f.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

LabelBatch read_pgm(const std::filesystem::path& path) {
  const Netpbm img = read_netpbm(path, "P5", 1);
  LabelBatch labels(1, img.height, img.width);
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    labels.data[i] = static_cast<unsigned char>(img.pixels[i]);
  }
  return labels;
}

}  // namespace dfnet
