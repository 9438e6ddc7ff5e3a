#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kanslu/autodiff/parameter.hpp"
#include "kanslu/errors.hpp"

namespace kanslu::train {

// Raised when a checkpoint's parameter names or shapes do not fit a model.
struct CheckpointMismatch : FormatError {
  using FormatError::FormatError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "KANCKPT", u32 version, then per tensor: u32 name length, name, u32 rank,
// u32 dims, little-endian f64 payload. Buffers are included.
void save_checkpoint(const std::filesystem::path& path, const ad::ParameterList& params);
void load_checkpoint(const std::filesystem::path& path, const ad::ParameterList& params);

using Snapshot = std::vector<std::pair<std::string, ad::Tensor>>;
Snapshot take_snapshot(const ad::ParameterList& params);
void restore_snapshot(const Snapshot& snapshot, const ad::ParameterList& params);

}  // namespace kanslu::train
