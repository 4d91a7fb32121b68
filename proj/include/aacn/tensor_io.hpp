#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aacn/attention.hpp"
#include "aacn/autodiff.hpp"
#include "aacn/tensor.hpp"

namespace aacn {

enum class IoErrorCode {
    open_failed,
    bad_magic,
    version_mismatch,
    truncated,
    malformed,
};

struct IoError : std::runtime_error {
    IoErrorCode code;
    IoError(IoErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

inline constexpr uint32_t kTensorFileVersion = 1;
inline constexpr uint32_t kCheckpointVersion = 1;

// Tensor container: magic "AACN", u32 version, u32 rank, rank x u32 dims,
// then f32 little-endian row-major payload. Values round-trip bitwise as
// long as they are f32-representable (they are, for anything read back from
// this format).
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

// Checkpoint container: magic "AACW", u32 version, u32 parameter count, then
// per parameter: u32 name length, name bytes, u32 rank, dims, f32 payload.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
void write_checkpoint(const std::filesystem::path& path, const NamedTensors& params);
NamedTensors read_checkpoint(const std::filesystem::path& path);

// Convenience wrappers over live parameter sets. Loading requires an exact
// name/shape match.
void save_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params);
void load_parameters(const std::filesystem::path& path, const std::vector<Parameter*>& params);

// 8-bit binary PGM, values clamped to [0,1] and scaled by 255 with rounding.
void write_pgm(const std::filesystem::path& path, const AttentionMap& map);

} // namespace aacn
