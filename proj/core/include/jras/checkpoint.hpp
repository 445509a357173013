#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jras/nn.hpp"
#include "jras/optim.hpp"
#include "jras/tensor.hpp"

namespace jras::io {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary tensor bundle: magic "JRASTNS1", u32 count, then per tensor
// u32 name length, name bytes, u32 rank, i64 dims, f64 values. All integers
// and floats little-endian. Writes go to a temporary file that is renamed
// into place, so a crash never leaves a half-written bundle.
void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const nn::ParameterList& params);
// Names and shapes must match exactly; throws ValidationError otherwise.
void load_parameters(const std::filesystem::path& path, nn::ParameterList& params);

void save_adam_state(const std::filesystem::path& path, const optim::AdamState& state);
optim::AdamState load_adam_state(const std::filesystem::path& path);

// Replaces `path` with `contents` via write-then-rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// 64-bit FNV-1a, hex encoded. Stable across platforms.
std::string content_hash(std::string_view data);

}  // namespace jras::io
