#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dilemma/rng.hpp"

namespace dilemma {

inline std::string to_hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

inline std::string digest_string(std::string_view bytes) {
  return to_hex16(fnv1a64(bytes));
}

inline std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for digest: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return digest_string(ss.str());
}

}  // namespace dilemma
