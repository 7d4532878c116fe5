#include "dfnet/csv.hpp"

#include <charconv>

namespace dfnet {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace dfnet
