#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rau {

/// File could not be read, written, or decoded.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace rau
