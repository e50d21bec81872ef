#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rau/graph.hpp"
#include "rau/io.hpp"
#include "rau/model.hpp"

namespace rau {

/// Malformed or incompatible checkpoint (bad magic, version, truncation,
/// unknown or mis-shaped entry).
class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Layout, all integers little-endian:
//   "RAUC" | u32 version (1) | u32 count |
//   count x { u16 name_len | name bytes | u8 rank | rank x u32 dim | f64 data... }
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(std::span<Parameter* const> params);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void save_checkpoint(std::span<Parameter* const> params, const std::filesystem::path& path);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies every entry into the parameter of the same name. Every parameter
/// must be covered and shapes must agree.
void assign_checkpoint(std::span<Parameter* const> params, std::span<const NamedTensor> entries);

/// Layer sizes implied by the tensor shapes of a saved model.
ModelDims dims_from_checkpoint(std::span<const NamedTensor> entries);

}  // namespace rau
