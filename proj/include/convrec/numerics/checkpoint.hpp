#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "convrec/error.hpp"
#include "convrec/numerics/tensor.hpp"

// Binary parameter checkpoints:
//   "CVRC" | u32 version | records...
//   record = u64 name_len | name bytes (UTF-8) | u64 rank | rank x u64 dims |
//            prod(dims) x f64 data
// All integers and doubles little-endian.
namespace convrec::numerics {

inline constexpr std::array<char, 4> kCheckpointMagic{'C', 'V', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

template <class UInt>
void put_le(std::vector<unsigned char>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::uint64_t offset() const { return pos_; }

  template <class UInt>
  UInt get_le(const char* what) {
    require(sizeof(UInt), what);
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(UInt);
    return v;
  }

  void get_bytes(char* dst, std::size_t n, const char* what) {
    require(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  void require(std::uint64_t n, const char* what) const {
    if (n > bytes_.size() - pos_) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& records) {
  std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& r : records) {
    detail::put_le<std::uint64_t>(out, r.name.size());
    out.insert(out.end(), r.name.begin(), r.name.end());
    detail::put_le<std::uint64_t>(out, r.tensor.rank());
    for (std::size_t d : r.tensor.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : r.tensor.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::vector<unsigned char>& bytes) {
  detail::ByteReader in(bytes);
  std::array<char, 4> magic{};
  in.get_bytes(magic.data(), magic.size(), "magic");
  if (magic != kCheckpointMagic) throw FormatError("bad checkpoint magic", 0);
  const auto version = in.get_le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  std::vector<NamedTensor> records;
  while (!in.at_end()) {
    const std::uint64_t record_start = in.offset();
    const auto name_len = in.get_le<std::uint64_t>("name length");
    in.require(name_len, "name");
    std::string name(name_len, '\0');
    in.get_bytes(name.data(), name_len, "name");
    const auto rank = in.get_le<std::uint64_t>("rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), record_start);
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = in.get_le<std::uint64_t>("dimension");
      if (d != 0 && count > (std::uint64_t{1} << 40) / d) throw FormatError("implausible tensor size", in.offset());
      count *= d;
    }
    in.require(count * 8, "tensor data");
    Tensor t(shape);
    for (auto& v : t.data()) v = std::bit_cast<double>(in.get_le<std::uint64_t>("tensor data"));
    records.push_back({std::move(name), std::move(t)});
  }
  return records;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  const auto bytes = encode_checkpoint(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

inline std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace convrec::numerics
