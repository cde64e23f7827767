// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kid::util {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over `path`. On failure the
// destination is untouched and the temp file removed.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);
std::string hex64(std::uint64_t v);

}  // namespace kid::util
