#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace bundleseg {

/// Batch of 2-D multi-channel images, stored channel-major:
/// element (n, c, y, x) lives at ((c*batch + n)*height + y)*width + x.
/// Every channel is one contiguous run over the whole batch, which makes
/// channel concatenation an append and per-channel reductions linear scans.
struct Tensor {
  int batch = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : batch(n), channels(c), height(h), width(w),
        data(static_cast<std::size_t>(n) * c * h * w, fill) {}
  Tensor(const Tensor&) = default;
  Tensor& operator=(const Tensor&) = default;
  // moved-from tensors must read as empty, not as a shape with no storage
  Tensor(Tensor&& o) noexcept
      : batch(o.batch), channels(o.channels), height(o.height), width(o.width), data(std::move(o.data)) {
    o.batch = o.channels = o.height = o.width = 0;
    o.data.clear();
  }
  Tensor& operator=(Tensor&& o) noexcept {
    if (this != &o) {
      batch = o.batch;
      channels = o.channels;
      height = o.height;
      width = o.width;
      data = std::move(o.data);
      o.batch = o.channels = o.height = o.width = 0;
      o.data.clear();
    }
    return *this;
  }

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  /// Elements per channel across the whole batch.
  std::size_t channel_size() const { return plane() * batch; }
  std::size_t size() const { return data.size(); }

  float* channel(int c) { return data.data() + c * channel_size(); }
  const float* channel(int c) const { return data.data() + c * channel_size(); }

  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(c) * batch + n) * height + y) * width + x;
  }
  float& at(int n, int c, int y, int x) { return data[offset(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data[offset(n, c, y, x)]; }

  bool same_shape(const Tensor& o) const {
    return batch == o.batch && channels == o.channels && height == o.height && width == o.width;
  }
};

}  // namespace bundleseg
