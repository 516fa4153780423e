#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hucd/error.hpp"

namespace hucd {

/// Dense (batch, channel, height, width) array of doubles, row-major.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ArgumentError("Tensor: negative dimension");
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }

  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  std::span<double> plane(int n, int c) {
    return {data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size(), plane_size()};
  }
  std::span<const double> plane(int n, int c) const {
    return {data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size(), plane_size()};
  }

  /// Copy of image `n` as a single-image tensor.
  Tensor image(int n) const {
    Tensor out(1, c_, h_, w_);
    const std::size_t len = static_cast<std::size_t>(c_) * plane_size();
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(n * len), len, out.data_.begin());
    return out;
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  friend bool operator==(const Tensor& a, const Tensor& b) { return a.same_shape(b) && a.data_ == b.data_; }

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

/// Binary H×W validity grid; 1 = valid/unmasked.
class Mask {
 public:
  Mask() = default;
  Mask(int h, int w, bool fill = false)
      : h_(h), w_(w), bits_(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {
    if (h < 0 || w < 0) throw ArgumentError("Mask: negative dimension");
  }

  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return bits_.size(); }

  bool at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * w_ + x] != 0; }
  void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * w_ + x] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto b : bits_) c += b;
    return c;
  }
  bool empty() const { return count() == 0; }
  bool full() const { return count() == bits_.size(); }
  double area_fraction() const { return bits_.empty() ? 0.0 : static_cast<double>(count()) / bits_.size(); }

  Mask inverted() const {
    Mask out(h_, w_);
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] ? 0 : 1;
    return out;
  }
  Mask& operator|=(const Mask& o) {
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] = (bits_[i] | o.bits_[i]);
    return *this;
  }
  /// True when every valid position of *this is valid in `o`.
  bool subset_of(const Mask& o) const {
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i] && !o.bits_[i]) return false;
    return true;
  }

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  friend bool operator==(const Mask& a, const Mask& b) = default;

 private:
  int h_ = 0, w_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Feature values paired with a spatial validity mask shared across channels.
struct MaskedTensor {
  Tensor values;  // 1 × C × H × W
  Mask mask;      // H × W
};

}  // namespace hucd
