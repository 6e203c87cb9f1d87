#include "pd4ml/md5.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <vector>

#include "pd4ml/errors.hpp"

namespace pd4ml {

struct Md5::State {
  EVP_MD_CTX* ctx = nullptr;
};

Md5::Md5() : state_(std::make_unique<State>()) {
  state_->ctx = EVP_MD_CTX_new();
  if (!state_->ctx || EVP_DigestInit_ex(state_->ctx, EVP_md5(), nullptr) != 1) {
    throw std::runtime_error("cannot initialise MD5 context");
  }
}

Md5::~Md5() { EVP_MD_CTX_free(state_->ctx); }

void Md5::update(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return;
  if (EVP_DigestUpdate(state_->ctx, bytes.data(), bytes.size()) != 1) throw std::runtime_error("MD5 update failed");
}

Md5Digest Md5::finish() {
  Md5Digest d{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(state_->ctx, d.data(), &len) != 1 || len != d.size()) {
    throw std::runtime_error("MD5 finalisation failed");
  }
  return d;
}

Md5Digest md5(std::span<const std::uint8_t> bytes) {
  Md5 h;
  h.update(bytes);
  return h.finish();
}

Md5Digest md5_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + file.string() + " for checksum");
  Md5 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    h.update({reinterpret_cast<const std::uint8_t*>(buf.data()), got});
  }
  return h.finish();
}

std::string to_hex(const Md5Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(32);
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 15]);
  }
  return s;
}

}  // namespace pd4ml
