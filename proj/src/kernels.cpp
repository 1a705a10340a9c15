#include "bundleseg/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "bundleseg/error.hpp"

namespace bundleseg::kernels {
namespace {

// Upper bound on the im2col scratch buffer, in floats.
constexpr std::size_t kColumnBudget = std::size_t{1} << 17;

void check_conv_shapes(const Tensor& x, std::span<const float> weight, int out_channels,
                       int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw Error(ErrorKind::invalid_argument, "convolution kernel must be odd");
  }
  const std::size_t expected =
      static_cast<std::size_t>(out_channels) * x.channels * kernel * kernel;
  if (weight.size() != expected) {
    throw Error(ErrorKind::shape_mismatch, "conv weight has " + std::to_string(weight.size()) +
                                               " values, expected " + std::to_string(expected));
  }
}

int group_size(const Tensor& x, int kernel) {
  const std::size_t per_sample = static_cast<std::size_t>(x.channels) * kernel * kernel * x.plane();
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_sample, 1), 1,
                                                  static_cast<std::size_t>(x.batch)));
}

// cols[(c*k + ky)*k + kx][g*HW + y*W + xx] = x(n0+g, c, y+ky-p, xx+kx-p)
void im2col(const Tensor& x, int n0, int count, int kernel, float* cols) {
  const int H = x.height, W = x.width, pad = kernel / 2;
  const std::size_t HW = x.plane();
  const std::size_t row_len = HW * count;
  const int rows = x.channels * kernel * kernel;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int c = r / (kernel * kernel);
    const int ky = (r / kernel) % kernel;
    const int kx = r % kernel;
    float* dst = cols + r * row_len;
    for (int g = 0; g < count; ++g) {
      const float* src = x.data.data() + x.offset(n0 + g, c, 0, 0);
      float* out = dst + g * HW;
      for (int y = 0; y < H; ++y) {
        const int sy = y + ky - pad;
        float* orow = out + static_cast<std::size_t>(y) * W;
        if (sy < 0 || sy >= H) {
          std::fill(orow, orow + W, 0.0f);
          continue;
        }
        const float* srow = src + static_cast<std::size_t>(sy) * W;
        const int lo = std::max(0, pad - kx);
        const int hi = std::min(W, W + pad - kx);
        for (int xx = 0; xx < lo; ++xx) orow[xx] = 0.0f;
        for (int xx = lo; xx < hi; ++xx) orow[xx] = srow[xx + kx - pad];
        for (int xx = hi; xx < W; ++xx) orow[xx] = 0.0f;
      }
    }
  }
}

// Adjoint of im2col, accumulating into dx. Each thread owns whole input channels.
void col2im(const float* cols, int n0, int count, int kernel, Tensor& dx) {
  const int H = dx.height, W = dx.width, pad = kernel / 2;
  const std::size_t HW = dx.plane();
  const std::size_t row_len = HW * count;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < dx.channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const float* src = cols + ((c * kernel + ky) * kernel + kx) * row_len;
        for (int g = 0; g < count; ++g) {
          float* out = dx.data.data() + dx.offset(n0 + g, c, 0, 0);
          const float* in = src + g * HW;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= H) continue;
            const float* irow = in + static_cast<std::size_t>(y) * W;
            float* orow = out + static_cast<std::size_t>(sy) * W;
            const int lo = std::max(0, pad - kx);
            const int hi = std::min(W, W + pad - kx);
            for (int xx = lo; xx < hi; ++xx) orow[xx + kx - pad] += irow[xx];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const Tensor& x, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, int kernel, Tensor& y) {
  check_conv_shapes(x, weight, out_channels, kernel);
  if (!(y.batch == x.batch && y.channels == out_channels && y.height == x.height &&
        y.width == x.width)) {
    y = Tensor(x.batch, out_channels, x.height, x.width);
  }
  const int K = x.channels * kernel * kernel;
  const std::size_t HW = x.plane();
  const int ldc = static_cast<int>(HW * x.batch);

  if (kernel == 1) {
    // Channel-major storage already is the [in][batch*HW] column matrix.
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_channels, ldc, K, 1.0f,
                weight.data(), K, x.data.data(), ldc, 0.0f, y.data.data(), ldc);
  } else {
    const int G = group_size(x, kernel);
    std::vector<float> cols(static_cast<std::size_t>(K) * HW * G);
    for (int n0 = 0; n0 < x.batch; n0 += G) {
      const int count = std::min(G, x.batch - n0);
      const int N = static_cast<int>(HW * count);
      im2col(x, n0, count, kernel, cols.data());
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_channels, N, K, 1.0f,
                  weight.data(), K, cols.data(), N, 0.0f, y.data.data() + n0 * HW, ldc);
    }
  }
  if (!bias.empty()) {
#pragma omp parallel for
    for (int o = 0; o < out_channels; ++o) {
      float* ch = y.channel(o);
      const float b = bias[o];
      for (std::size_t i = 0; i < y.channel_size(); ++i) ch[i] += b;
    }
  }
}

void conv2d_backward(const Tensor& x, std::span<const float> weight, int kernel, const Tensor& dy,
                     Tensor* dx, std::span<float> dweight, std::span<float> dbias) {
  const int out_channels = dy.channels;
  check_conv_shapes(x, weight, out_channels, kernel);
  if (dweight.size() != weight.size()) {
    throw Error(ErrorKind::shape_mismatch, "conv weight gradient size mismatch");
  }
  const int K = x.channels * kernel * kernel;
  const std::size_t HW = x.plane();
  const int ld = static_cast<int>(HW * x.batch);

  if (!dbias.empty()) {
#pragma omp parallel for
    for (int o = 0; o < out_channels; ++o) {
      const float* ch = dy.channel(o);
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.channel_size(); ++i) acc += ch[i];
      dbias[o] = static_cast<float>(acc);
    }
  }
  if (dx) {
    if (!dx->same_shape(x)) *dx = Tensor(x.batch, x.channels, x.height, x.width);
    std::fill(dx->data.begin(), dx->data.end(), 0.0f);
  }

  if (kernel == 1) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_channels, K, ld, 1.0f, dy.data.data(),
                ld, x.data.data(), ld, 0.0f, dweight.data(), K);
    if (dx) {
      cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, ld, out_channels, 1.0f,
                  weight.data(), K, dy.data.data(), ld, 0.0f, dx->data.data(), ld);
    }
    return;
  }

  const int G = group_size(x, kernel);
  std::vector<float> cols(static_cast<std::size_t>(K) * HW * G);
  std::vector<float> dcols(dx ? cols.size() : 0);
  for (int n0 = 0; n0 < x.batch; n0 += G) {
    const int count = std::min(G, x.batch - n0);
    const int N = static_cast<int>(HW * count);
    im2col(x, n0, count, kernel, cols.data());
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_channels, K, N, 1.0f,
                dy.data.data() + n0 * HW, ld, cols.data(), N, n0 == 0 ? 0.0f : 1.0f,
                dweight.data(), K);
    if (dx) {
      cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, N, out_channels, 1.0f,
                  weight.data(), K, dy.data.data() + n0 * HW, ld, 0.0f, dcols.data(), N);
      col2im(dcols.data(), n0, count, kernel, *dx);
    }
  }
}

void batchnorm_relu_forward_train(const Tensor& x, std::span<const float> gamma,
                                  std::span<const float> beta, std::span<float> running_mean,
                                  std::span<float> running_var, float momentum, float eps,
                                  Tensor& y, BatchNormCache& cache) {
  if (!y.same_shape(x)) y = Tensor(x.batch, x.channels, x.height, x.width);
  if (!cache.normalized.same_shape(x)) cache.normalized = Tensor(x.batch, x.channels, x.height, x.width);
  cache.inv_std.assign(x.channels, 0.0f);
  const std::size_t M = x.channel_size();
#pragma omp parallel for
  for (int c = 0; c < x.channels; ++c) {
    const float* in = x.channel(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < M; ++i) sum += in[i];
    const double mean = sum / static_cast<double>(M);
    double sq = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const double d = in[i] - mean;
      sq += d * d;
    }
    const double var = sq / static_cast<double>(M);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    cache.inv_std[c] = inv;
    const float fm = static_cast<float>(mean);
    float* xh = cache.normalized.channel(c);
    float* out = y.channel(c);
    const float g = gamma[c], b = beta[c];
    for (std::size_t i = 0; i < M; ++i) {
      const float v = (in[i] - fm) * inv;
      xh[i] = v;
      out[i] = std::max(0.0f, g * v + b);
    }
    const double unbiased = M > 1 ? sq / static_cast<double>(M - 1) : var;
    running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] + momentum * mean);
    running_var[c] = static_cast<float>((1.0 - momentum) * running_var[c] + momentum * unbiased);
  }
}

void batchnorm_relu_forward_eval(const Tensor& x, std::span<const float> gamma,
                                 std::span<const float> beta, std::span<const float> running_mean,
                                 std::span<const float> running_var, float eps, Tensor& y) {
  if (!y.same_shape(x)) y = Tensor(x.batch, x.channels, x.height, x.width);
  const std::size_t M = x.channel_size();
#pragma omp parallel for
  for (int c = 0; c < x.channels; ++c) {
    const float inv = static_cast<float>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    const float scale = gamma[c] * inv;
    const float shift = beta[c] - running_mean[c] * scale;
    const float* in = x.channel(c);
    float* out = y.channel(c);
    for (std::size_t i = 0; i < M; ++i) out[i] = std::max(0.0f, in[i] * scale + shift);
  }
}

void batchnorm_relu_backward(const Tensor& y, const Tensor& dy, const BatchNormCache& cache,
                             std::span<const float> gamma, Tensor& dx, std::span<float> dgamma,
                             std::span<float> dbeta) {
  if (!dx.same_shape(dy)) dx = Tensor(dy.batch, dy.channels, dy.height, dy.width);
  const std::size_t M = dy.channel_size();
#pragma omp parallel for
  for (int c = 0; c < dy.channels; ++c) {
    const float* yo = y.channel(c);
    const float* g = dy.channel(c);
    const float* xh = cache.normalized.channel(c);
    double sum_dz = 0.0, sum_dz_xh = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const float dz = yo[i] > 0.0f ? g[i] : 0.0f;
      sum_dz += dz;
      sum_dz_xh += static_cast<double>(dz) * xh[i];
    }
    dgamma[c] = static_cast<float>(sum_dz_xh);
    dbeta[c] = static_cast<float>(sum_dz);
    const float k = gamma[c] * cache.inv_std[c] / static_cast<float>(M);
    const float mean_dz = static_cast<float>(sum_dz);
    const float mean_dz_xh = static_cast<float>(sum_dz_xh);
    float* out = dx.channel(c);
    for (std::size_t i = 0; i < M; ++i) {
      const float dz = yo[i] > 0.0f ? g[i] : 0.0f;
      out[i] = k * (static_cast<float>(M) * dz - mean_dz - xh[i] * mean_dz_xh);
    }
  }
}

void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::uint8_t>& argmax) {
  if (x.height % 2 != 0 || x.width % 2 != 0) {
    throw Error(ErrorKind::shape_mismatch, "max pooling needs even spatial dimensions");
  }
  const int H = x.height / 2, W = x.width / 2;
  if (!(y.batch == x.batch && y.channels == x.channels && y.height == H && y.width == W)) {
    y = Tensor(x.batch, x.channels, H, W);
  }
  argmax.resize(y.size());
  const int planes = x.channels * x.batch;
#pragma omp parallel for
  for (int p = 0; p < planes; ++p) {
    const float* in = x.data.data() + static_cast<std::size_t>(p) * x.plane();
    float* out = y.data.data() + static_cast<std::size_t>(p) * y.plane();
    std::uint8_t* arg = argmax.data() + static_cast<std::size_t>(p) * y.plane();
    for (int r = 0; r < H; ++r) {
      const float* r0 = in + static_cast<std::size_t>(2 * r) * x.width;
      const float* r1 = r0 + x.width;
      for (int c = 0; c < W; ++c) {
        const float v[4] = {r0[2 * c], r0[2 * c + 1], r1[2 * c], r1[2 * c + 1]};
        int best = 0;
        for (int t = 1; t < 4; ++t) {
          if (v[t] > v[best]) best = t;
        }
        out[r * W + c] = v[best];
        arg[r * W + c] = static_cast<std::uint8_t>(best);
      }
    }
  }
}

void maxpool2_backward(const Tensor& dy, const std::vector<std::uint8_t>& argmax, Tensor& dx) {
  const int H = dy.height * 2, W = dy.width * 2;
  if (!(dx.batch == dy.batch && dx.channels == dy.channels && dx.height == H && dx.width == W)) {
    dx = Tensor(dy.batch, dy.channels, H, W);
  }
  const int planes = dy.channels * dy.batch;
#pragma omp parallel for
  for (int p = 0; p < planes; ++p) {
    const float* g = dy.data.data() + static_cast<std::size_t>(p) * dy.plane();
    const std::uint8_t* arg = argmax.data() + static_cast<std::size_t>(p) * dy.plane();
    float* out = dx.data.data() + static_cast<std::size_t>(p) * dx.plane();
    std::fill(out, out + dx.plane(), 0.0f);
    for (int r = 0; r < dy.height; ++r) {
      for (int c = 0; c < dy.width; ++c) {
        const int a = arg[r * dy.width + c];
        out[static_cast<std::size_t>(2 * r + a / 2) * W + 2 * c + a % 2] = g[r * dy.width + c];
      }
    }
  }
}

void upsample2_forward(const Tensor& x, Tensor& y) {
  const int H = x.height * 2, W = x.width * 2;
  if (!(y.batch == x.batch && y.channels == x.channels && y.height == H && y.width == W)) {
    y = Tensor(x.batch, x.channels, H, W);
  }
  const int planes = x.channels * x.batch;
#pragma omp parallel for
  for (int p = 0; p < planes; ++p) {
    const float* in = x.data.data() + static_cast<std::size_t>(p) * x.plane();
    float* out = y.data.data() + static_cast<std::size_t>(p) * y.plane();
    for (int r = 0; r < H; ++r) {
      const float* irow = in + static_cast<std::size_t>(r / 2) * x.width;
      float* orow = out + static_cast<std::size_t>(r) * W;
      for (int c = 0; c < W; ++c) orow[c] = irow[c / 2];
    }
  }
}

void upsample2_backward(const Tensor& dy, Tensor& dx) {
  const int H = dy.height / 2, W = dy.width / 2;
  if (!(dx.batch == dy.batch && dx.channels == dy.channels && dx.height == H && dx.width == W)) {
    dx = Tensor(dy.batch, dy.channels, H, W);
  }
  const int planes = dy.channels * dy.batch;
#pragma omp parallel for
  for (int p = 0; p < planes; ++p) {
    const float* g = dy.data.data() + static_cast<std::size_t>(p) * dy.plane();
    float* out = dx.data.data() + static_cast<std::size_t>(p) * dx.plane();
    for (int r = 0; r < H; ++r) {
      const float* g0 = g + static_cast<std::size_t>(2 * r) * dy.width;
      const float* g1 = g0 + dy.width;
      for (int c = 0; c < W; ++c) {
        out[r * W + c] = g0[2 * c] + g0[2 * c + 1] + g1[2 * c] + g1[2 * c + 1];
      }
    }
  }
}

void sigmoid_forward(const Tensor& x, Tensor& y) {
  static const float kBelowOne = std::nextafter(1.0f, 0.0f);
  if (!y.same_shape(x)) y = Tensor(x.batch, x.channels, x.height, x.width);
  const std::size_t n = x.size();
#pragma omp parallel for
  for (std::size_t i = 0; i < n; ++i) {
    const float p = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data[i]))));
    // Keep probabilities strictly inside (0, 1) in single precision.
    y.data[i] = std::clamp(p, 1e-7f, kBelowOne);
  }
}

}  // namespace bundleseg::kernels
