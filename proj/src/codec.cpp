#include "pd4ml/codec.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <unistd.h>

#include "pd4ml/errors.hpp"
#include "pd4ml/md5.hpp"

namespace pd4ml {

static_assert(std::endian::native == std::endian::little, "codec assumes a little-endian host");

const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
    case DType::u8: return "u8";
  }
  return "?";
}

namespace {

std::size_t dtype_width(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i32: return 4;
    case DType::u8: return 1;
  }
  return 0;
}

bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

void put_value(std::vector<std::uint8_t>& out, DType t, double v, const std::string& name) {
  auto reject = [&] {
    throw ContractError("tensor '" + name + "': value " + std::to_string(v) + " not representable as " +
                        dtype_name(t));
  };
  switch (t) {
    case DType::f64:
      put(out, v);
      return;
    case DType::f32: {
      const auto f = static_cast<float>(v);
      if (static_cast<double>(f) != v && !std::isnan(v)) reject();
      put(out, f);
      return;
    }
    case DType::i32:
      if (v != std::floor(v) || v < std::numeric_limits<std::int32_t>::min() ||
          v > std::numeric_limits<std::int32_t>::max())
        reject();
      put(out, static_cast<std::int32_t>(v));
      return;
    case DType::u8:
      if (v != std::floor(v) || v < 0 || v > 255) reject();
      put(out, static_cast<std::uint8_t>(v));
      return;
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > bytes_.size() - pos_) throw FormatError(std::string("truncated container while reading ") + what);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const TensorMap& tensors) {
  std::vector<std::uint8_t> out = {'P', 'D', '4', 'M'};
  put(out, kCodecVersion);
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max()) throw ContractError("too many tensors");
  put(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, entry] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw ContractError("tensor name too long");
    if (!valid_utf8(name)) throw ContractError("tensor name is not valid UTF-8");
    if (entry.value.rank() > 255) throw ContractError("tensor rank above 255");
    put(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put(out, static_cast<std::uint8_t>(entry.dtype));
    put(out, static_cast<std::uint8_t>(entry.value.rank()));
    for (auto e : entry.value.shape()) put(out, static_cast<std::uint64_t>(e));
    out.reserve(out.size() + entry.value.size() * dtype_width(entry.dtype) + 16);
    for (double v : entry.value.data()) put_value(out, entry.dtype, v, name);
  }
  const Md5Digest d = md5(out);
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

TensorMap decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 4 + 16) throw FormatError("container shorter than header and footer");
  const auto body = bytes.first(bytes.size() - 16);
  const Md5Digest want = md5(body);
  if (std::memcmp(want.data(), bytes.data() + body.size(), 16) != 0) {
    throw FormatError("footer checksum mismatch");
  }
  Reader r(body);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "PD4M", 4) != 0) throw FormatError("bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCodecVersion) throw FormatError("unsupported container version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");

  TensorMap out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = r.get<std::uint16_t>("name length");
    auto raw = r.take(len, "name");
    std::string name(raw.begin(), raw.end());
    if (!valid_utf8(name)) throw FormatError("tensor name is not valid UTF-8");
    const auto code = r.get<std::uint8_t>("dtype");
    if (code < 1 || code > 4) throw FormatError("unknown dtype " + std::to_string(code));
    const auto dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape(rank);
    std::size_t count_el = 1;
    for (auto& e : shape) {
      const auto ext = r.get<std::uint64_t>("extent");
      e = static_cast<std::size_t>(ext);
      if (__builtin_mul_overflow(count_el, e, &count_el)) throw FormatError("extents overflow");
    }
    const std::size_t w = dtype_width(dtype);
    if (count_el > r.remaining() / w) throw FormatError("truncated payload for '" + name + "'");
    auto payload = r.take(count_el * w, "payload");
    std::vector<double> values(count_el);
    const std::uint8_t* p = payload.data();
    for (std::size_t i = 0; i < count_el; ++i, p += w) {
      switch (dtype) {
        case DType::f32: {
          float f;
          std::memcpy(&f, p, 4);
          values[i] = f;
          break;
        }
        case DType::f64:
          std::memcpy(&values[i], p, 8);
          break;
        case DType::i32: {
          std::int32_t v;
          std::memcpy(&v, p, 4);
          values[i] = v;
          break;
        }
        case DType::u8:
          values[i] = *p;
          break;
      }
    }
    if (!out.emplace(name, StoredTensor{dtype, Tensor(std::move(shape), std::move(values))}).second) {
      throw FormatError("duplicate tensor name '" + name + "'");
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes before footer");
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + file.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::uint8_t> bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("short read on " + file.string());
  return bytes;
}

void write_bytes_atomic(const std::filesystem::path& file, std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned> counter{0};
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::filesystem::path tmp = file;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

void write_tensor_file(const std::filesystem::path& file, const TensorMap& tensors) {
  write_bytes_atomic(file, encode(tensors));
}

TensorMap read_tensor_file(const std::filesystem::path& file) {
  const auto bytes = read_bytes(file);
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

const Tensor& require_tensor(const TensorMap& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("container has no tensor named '" + name + "'");
  return it->second.value;
}

}  // namespace pd4ml
