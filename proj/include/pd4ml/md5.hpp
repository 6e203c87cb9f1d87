#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>

namespace pd4ml {

using Md5Digest = std::array<std::uint8_t, 16>;

// Incremental MD5.
class Md5 {
 public:
  Md5();
  ~Md5();
  Md5(const Md5&) = delete;
  Md5& operator=(const Md5&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  Md5Digest finish();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

Md5Digest md5(std::span<const std::uint8_t> bytes);
Md5Digest md5_file(const std::filesystem::path& file);

// Lower-case hex.
std::string to_hex(const Md5Digest& digest);

}  // namespace pd4ml
