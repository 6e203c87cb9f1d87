#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pd4ml/tensor.hpp"

namespace pd4ml {

// Named-tensor container, little-endian throughout:
//   "PD4M" | u32 version | u32 count |
//   count x (u16 name_len | name | u8 dtype | u8 rank | rank x u64 extent | payload) |
//   16-byte MD5 of everything before it
inline constexpr std::uint32_t kCodecVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i32 = 3, u8 = 4 };

const char* dtype_name(DType t);

// Values are held as doubles in memory; the dtype fixes the on-disk width.
// Writing a value the dtype cannot represent exactly is a contract error.
struct StoredTensor {
  DType dtype = DType::f64;
  Tensor value;

  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

using TensorMap = std::map<std::string, StoredTensor>;

std::vector<std::uint8_t> encode(const TensorMap& tensors);
TensorMap decode(std::span<const std::uint8_t> bytes);

// Atomic write (temp file in the same directory, then rename).
void write_tensor_file(const std::filesystem::path& file, const TensorMap& tensors);
TensorMap read_tensor_file(const std::filesystem::path& file);

// Whole-file helpers shared with the fetch and run-directory code.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& file);
void write_bytes_atomic(const std::filesystem::path& file, std::span<const std::uint8_t> bytes);

// Looks up `name` or throws FormatError naming the file contents.
const Tensor& require_tensor(const TensorMap& tensors, const std::string& name);

}  // namespace pd4ml
