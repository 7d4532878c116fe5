#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "dfnet/tensor.hpp"

namespace dfnet {

/// Trainable tensor drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_parameter(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

/// Independent generator for sub-stream `stream` of `seed`.
std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace dfnet
