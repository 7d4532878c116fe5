#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfnet/tensor.hpp"

namespace dfnet {

inline constexpr char kCheckpointMagic[4] = {'D', 'F', 'N', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

// Layout (all integers little-endian):
//   "DFNK" | u16 version
//   repeated until end of file:
//     u32 name length | name bytes | u64 n, c, h, w | n*c*h*w f64 values

std::string encode_checkpoint(std::span<const NamedParameter> params);
/// Throws DataError on a bad magic, unknown version or truncated record.
std::vector<NamedParameter> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedParameter> params);
std::vector<NamedParameter> load_checkpoint(const std::filesystem::path& path);

/// Copies values into `dest` by name. Missing names or shape mismatches
/// (e.g. a different class count) raise ConfigError.
void assign_parameters(std::span<NamedParameter> dest, const std::vector<NamedParameter>& src);

}  // namespace dfnet
