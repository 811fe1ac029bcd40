#ifndef HDRFUSE_IMAGE_HPP
#define HDRFUSE_IMAGE_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdrfuse {

// Dense row-major 2-D array with value semantics. Row index first.
template <typename T>
class Image {
public:
  Image() = default;
  Image(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T &operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
  const T &operator()(std::size_t r, std::size_t c) const {
    return data_[r * width_ + c];
  }
  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  T *data() { return data_.data(); }
  const T *data() const { return data_.data(); }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool same_shape(const Image &other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image &a, const Image &b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Image<T> &a, const Image<T> &b,
                        const char *what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

} // namespace hdrfuse

#endif
