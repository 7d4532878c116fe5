#include "dfnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "dfnet/errors.hpp"

namespace dfnet {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(std::span<const NamedParameter> params) {
  std::string out(kCheckpointMagic, 4);
  put_le<std::uint16_t>(out, kCheckpointVersion);
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    const Shape s = p.value.shape();
    for (std::size_t e : {s.n, s.c, s.h, s.w}) put_le<std::uint64_t>(out, e);
    for (double v : p.value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedParameter> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    throw DataError("not a checkpoint: bad magic bytes");
  }
  const auto version = in.get_le<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedParameter> params;
  while (!in.done()) {
    const auto len = in.get_le<std::uint32_t>("name length");
    std::string name(in.take(len, "name"));
    Shape s;
    s.n = in.get_le<std::uint64_t>("shape");
    s.c = in.get_le<std::uint64_t>("shape");
    s.h = in.get_le<std::uint64_t>("shape");
    s.w = in.get_le<std::uint64_t>("shape");
    std::vector<double> values(s.numel());
    for (double& v : values) v = std::bit_cast<double>(in.get_le<std::uint64_t>("values"));
    params.push_back({std::move(name), Tensor(s, std::move(values), true)});
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedParameter> params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path.string());
  const std::string bytes = encode_checkpoint(params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing checkpoint: " + path.string());
}

std::vector<NamedParameter> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void assign_parameters(std::span<NamedParameter> dest, const std::vector<NamedParameter>& src) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& p : src) by_name.emplace(p.name, &p.value);
  for (auto& p : dest) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter " + p.name);
    if (it->second->shape() != p.value.shape()) {
      throw ConfigError("checkpoint parameter " + p.name + " has shape " +
                        it->second->shape().str() + ", model expects " + p.value.shape().str());
    }
    auto from = it->second->data();
    std::copy(from.begin(), from.end(), p.value.mutable_data().begin());
  }
  if (src.size() != dest.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(src.size()) + " parameters, model has " +
                      std::to_string(dest.size()));
  }
}

}  // namespace dfnet
