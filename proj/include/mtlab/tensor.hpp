#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtlab {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense N-dimensional value, row-major. The unit of all numerics in the
/// library. T is float for training, double for verification runs.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(static_cast<size_t>(checked_numel(shape_)), T(0)) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != static_cast<int64_t>(data_.size()))
      throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match data length " +
                                  std::to_string(data_.size()));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  /// [C,H,W] accessor.
  T& at(int64_t c, int64_t y, int64_t x) {
    return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }
  const T& at(int64_t c, int64_t y, int64_t x) const {
    return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }

  /// [H,W] accessor.
  T& at(int64_t y, int64_t x) { return data_[static_cast<size_t>(y * shape_[1] + x)]; }
  const T& at(int64_t y, int64_t x) const { return data_[static_cast<size_t>(y * shape_[1] + x)]; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> d(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(d));
  }

  bool requires_grad = false;
  /// Gradient buffer; empty means absent. When present it has the same
  /// length as data (attached by the trainer after a backward pass).
  std::vector<T> grad;

 private:
  static int64_t checked_numel(const Shape& s) {
    for (int64_t d : s)
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim in shape " + shape_str(s));
    return numel(s);
  }

  Shape shape_;
  std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// TNS1 binary container: magic "TNS1", u32 rank, rank x u32 dims,
// little-endian float32 payload, row-major. Used by datasets and checkpoints.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace detail

template <typename T>
inline void save_tns(const std::filesystem::path& path, const Tensor<T>& t) {
  std::string buf;
  buf.reserve(8 + 4 * t.shape().size() + 4 * static_cast<size_t>(t.size()));
  buf += "TNS1";
  detail::put_u32_le(buf, static_cast<uint32_t>(t.shape().size()));
  for (int64_t d : t.shape()) detail::put_u32_le(buf, static_cast<uint32_t>(d));
  for (int64_t i = 0; i < t.size(); ++i) {
    const float f = static_cast<float>(t[static_cast<size_t>(i)]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32_le(buf, bits);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_tns: cannot open " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_tns: write failed for " + path.string());
}

template <typename T = float>
inline Tensor<T> load_tns(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_tns: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const size_t n = buf.size();
  if (n < 8 || std::memcmp(p, "TNS1", 4) != 0)
    throw std::runtime_error("load_tns: bad magic in " + path.string());
  const uint32_t rank = detail::get_u32_le(p + 4);
  if (rank == 0 || rank > 8 || n < 8 + 4ull * rank)
    throw std::runtime_error("load_tns: bad rank in " + path.string());
  Shape shape(rank);
  int64_t count = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = detail::get_u32_le(p + 8 + 4 * i);
    if (shape[i] <= 0) throw std::runtime_error("load_tns: bad dim in " + path.string());
    count *= shape[i];
  }
  const size_t header = 8 + 4ull * rank;
  if (n != header + 4ull * static_cast<size_t>(count))
    throw std::runtime_error("load_tns: truncated or oversized payload in " + path.string());
  std::vector<T> data(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    const uint32_t bits = detail::get_u32_le(p + header + 4 * static_cast<size_t>(i));
    float f;
    std::memcpy(&f, &bits, 4);
    data[static_cast<size_t>(i)] = static_cast<T>(f);
  }
  Tensor<T> t(std::move(shape), std::move(data));
  if (!t.all_finite()) throw std::runtime_error("load_tns: non-finite values in " + path.string());
  return t;
}

}  // namespace mtlab
