#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "echoview/common.hpp"

namespace echoview {

// Dense row-major array of T. Image batches use the (batch, channels,
// height, width) layout everywhere; matrices are (rows, cols).
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int64_t> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  static TensorT from(std::vector<int64_t> shape, std::vector<T> data) {
    TensorT t;
    require(count(shape) == int64_t(data.size()), Errc::shape_mismatch,
            "data length " + std::to_string(data.size()) + " does not fill shape " +
                shape_str(shape));
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int64_t dim(int i) const { return shape_[size_t(i)]; }
  int64_t size() const { return int64_t(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[size_t(i)]; }
  const T& operator[](int64_t i) const { return data_[size_t(i)]; }

  T& at(int64_t b, int64_t c, int64_t y, int64_t x) {
    return data_[size_t(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  const T& at(int64_t b, int64_t c, int64_t y, int64_t x) const {
    return data_[size_t(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  T& at(int64_t r, int64_t c) { return data_[size_t(r * shape_[1] + c)]; }
  const T& at(int64_t r, int64_t c) const { return data_[size_t(r * shape_[1] + c)]; }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  void fill(T v) { data_.assign(data_.size(), v); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (int64_t i = 0; i < size(); ++i) out[i] = U(data_[size_t(i)]);
    return out;
  }

  std::string shape_str() const { return shape_str(shape_); }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
  }

 private:
  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      require(d >= 0, Errc::bad_argument, "negative dimension in " + shape_str(s));
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

}  // namespace echoview
