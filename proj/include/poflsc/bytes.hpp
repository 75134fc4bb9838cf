#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "poflsc/error.hpp"
#include "poflsc/types.hpp"

namespace poflsc {

// Big-endian, unpadded canonical encoding.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void digest(const Digest& d) { out_.insert(out_.end(), d.begin(), d.end()); }
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  // u32 length prefix followed by the bytes.
  void bytes(std::span<const std::uint8_t> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    raw(b);
  }

  const std::vector<std::uint8_t>& data() const& { return out_; }
  std::vector<std::uint8_t> take() && { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return need(1)[0]; }
  std::uint32_t u32() {
    auto b = need(4);
    std::uint32_t v = 0;
    for (auto x : b) v = (v << 8) | x;
    return v;
  }
  std::uint64_t u64() {
    auto b = need(8);
    std::uint64_t v = 0;
    for (auto x : b) v = (v << 8) | x;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Digest digest() {
    auto b = need(32);
    Digest d{};
    std::memcpy(d.data(), b.data(), 32);
    return d;
  }
  std::vector<std::uint8_t> bytes() {
    const auto n = u32();
    auto b = need(n);
    return {b.begin(), b.end()};
  }

  bool done() const { return pos_ == in_.size(); }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> need(std::size_t n) {
    if (in_.size() - pos_ < n) {
      throw Error(ErrorCode::kTruncatedFile,
                  "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_));
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace poflsc
