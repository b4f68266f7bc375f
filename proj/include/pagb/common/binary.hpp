#pragma once

// Little-endian binary encoding for model containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "pagb/common/error.hpp"

namespace pagb::bin {

static_assert(std::endian::native == std::endian::little, "container encoding assumes a little-endian host");

class Writer {
public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u64(s.size());
    buf_.append(s);
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    if (!v.empty()) raw(v.data(), v.size() * sizeof(double));
  }

  const std::string& data() const noexcept { return buf_; }
  std::string take() noexcept { return std::move(buf_); }

private:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string buf_;
};

class Reader {
public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int32_t i32() { return pod<std::int32_t>(); }
  double f64() { return pod<double>(); }
  std::string_view bytes(std::size_t n) { return take(n); }
  std::string str() {
    const auto n = u64();
    return std::string(take(n));
  }
  std::vector<double> f64s() {
    const auto n = u64();
    if (n > remaining() / sizeof(double)) throw ValidationError("model container truncated");
    std::vector<double> v(n);
    if (n) std::memcpy(v.data(), take(n * sizeof(double)).data(), n * sizeof(double));
    return v;
  }
  /// Element count guarded against the bytes that remain.
  std::size_t count(std::size_t min_bytes_each) {
    const auto n = u64();
    if (min_bytes_each && n > remaining() / min_bytes_each) throw ValidationError("model container truncated");
    return n;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool done() const noexcept { return pos_ == data_.size(); }

private:
  template <class T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string_view take(std::size_t n) {
    if (n > remaining()) throw ValidationError("model container truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace pagb::bin
