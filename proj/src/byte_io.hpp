#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lwnd/errors.hpp"

namespace lwnd::detail {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

template <typename T>
void put_le(std::ostream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw IoError("truncated file while reading " + what);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace lwnd::detail
