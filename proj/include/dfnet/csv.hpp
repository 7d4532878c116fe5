#pragma once

#include <string>

namespace dfnet {

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace dfnet
