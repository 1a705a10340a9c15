#include <algorithm>
#include <cmath>

#include "bundleseg/error.hpp"
#include "bundleseg/kernels.hpp"

namespace bundleseg::kernels::reference {

void conv2d_forward(const Tensor& x, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, int kernel, Tensor& y) {
  const int pad = kernel / 2;
  if (weight.size() != static_cast<std::size_t>(out_channels) * x.channels * kernel * kernel) {
    throw Error(ErrorKind::shape_mismatch, "conv weight size mismatch");
  }
  y = Tensor(x.batch, out_channels, x.height, x.width);
  for (int n = 0; n < x.batch; ++n) {
    for (int o = 0; o < out_channels; ++o) {
      for (int r = 0; r < x.height; ++r) {
        for (int c = 0; c < x.width; ++c) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (int i = 0; i < x.channels; ++i) {
            for (int ky = 0; ky < kernel; ++ky) {
              for (int kx = 0; kx < kernel; ++kx) {
                const int sr = r + ky - pad, sc = c + kx - pad;
                if (sr < 0 || sc < 0 || sr >= x.height || sc >= x.width) continue;
                acc += static_cast<double>(weight[((o * x.channels + i) * kernel + ky) * kernel + kx]) *
                       x.at(n, i, sr, sc);
              }
            }
          }
          y.at(n, o, r, c) = static_cast<float>(acc);
        }
      }
    }
  }
}

void conv2d_backward(const Tensor& x, std::span<const float> weight, int kernel, const Tensor& dy,
                     Tensor* dx, std::span<float> dweight, std::span<float> dbias) {
  const int pad = kernel / 2;
  const int out_channels = dy.channels;
  std::vector<double> dw(weight.size(), 0.0);
  std::vector<double> db(out_channels, 0.0);
  Tensor grad_in(x.batch, x.channels, x.height, x.width);
  for (int n = 0; n < x.batch; ++n) {
    for (int o = 0; o < out_channels; ++o) {
      for (int r = 0; r < x.height; ++r) {
        for (int c = 0; c < x.width; ++c) {
          const float g = dy.at(n, o, r, c);
          db[o] += g;
          for (int i = 0; i < x.channels; ++i) {
            for (int ky = 0; ky < kernel; ++ky) {
              for (int kx = 0; kx < kernel; ++kx) {
                const int sr = r + ky - pad, sc = c + kx - pad;
                if (sr < 0 || sc < 0 || sr >= x.height || sc >= x.width) continue;
                const std::size_t w = ((o * x.channels + i) * kernel + ky) * kernel + kx;
                dw[w] += static_cast<double>(g) * x.at(n, i, sr, sc);
                grad_in.at(n, i, sr, sc) += g * weight[w];
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < dw.size(); ++i) dweight[i] = static_cast<float>(dw[i]);
  for (int o = 0; o < out_channels && !dbias.empty(); ++o) dbias[o] = static_cast<float>(db[o]);
  if (dx) *dx = std::move(grad_in);
}

void batchnorm_relu_forward_train(const Tensor& x, std::span<const float> gamma,
                                  std::span<const float> beta, std::span<float> running_mean,
                                  std::span<float> running_var, float momentum, float eps,
                                  Tensor& y, BatchNormCache& cache) {
  y = Tensor(x.batch, x.channels, x.height, x.width);
  cache.normalized = Tensor(x.batch, x.channels, x.height, x.width);
  cache.inv_std.assign(x.channels, 0.0f);
  const double M = static_cast<double>(x.batch) * x.height * x.width;
  for (int c = 0; c < x.channels; ++c) {
    double mean = 0.0;
    for (int n = 0; n < x.batch; ++n)
      for (int r = 0; r < x.height; ++r)
        for (int q = 0; q < x.width; ++q) mean += x.at(n, c, r, q);
    mean /= M;
    double var = 0.0;
    for (int n = 0; n < x.batch; ++n)
      for (int r = 0; r < x.height; ++r)
        for (int q = 0; q < x.width; ++q) var += (x.at(n, c, r, q) - mean) * (x.at(n, c, r, q) - mean);
    const double unbiased = M > 1 ? var / (M - 1) : var / M;
    var /= M;
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std[c] = static_cast<float>(inv);
    for (int n = 0; n < x.batch; ++n) {
      for (int r = 0; r < x.height; ++r) {
        for (int q = 0; q < x.width; ++q) {
          const double xh = (x.at(n, c, r, q) - mean) * inv;
          cache.normalized.at(n, c, r, q) = static_cast<float>(xh);
          y.at(n, c, r, q) = static_cast<float>(std::max(0.0, gamma[c] * xh + beta[c]));
        }
      }
    }
    running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] + momentum * mean);
    running_var[c] = static_cast<float>((1.0 - momentum) * running_var[c] + momentum * unbiased);
  }
}

void batchnorm_relu_backward(const Tensor& y, const Tensor& dy, const BatchNormCache& cache,
                             std::span<const float> gamma, Tensor& dx, std::span<float> dgamma,
                             std::span<float> dbeta) {
  dx = Tensor(dy.batch, dy.channels, dy.height, dy.width);
  const double M = static_cast<double>(dy.batch) * dy.height * dy.width;
  for (int c = 0; c < dy.channels; ++c) {
    double sum_dz = 0.0, sum_dz_xh = 0.0;
    for (int n = 0; n < dy.batch; ++n) {
      for (int r = 0; r < dy.height; ++r) {
        for (int q = 0; q < dy.width; ++q) {
          const double dz = y.at(n, c, r, q) > 0.0f ? dy.at(n, c, r, q) : 0.0;
          sum_dz += dz;
          sum_dz_xh += dz * cache.normalized.at(n, c, r, q);
        }
      }
    }
    dgamma[c] = static_cast<float>(sum_dz_xh);
    dbeta[c] = static_cast<float>(sum_dz);
    for (int n = 0; n < dy.batch; ++n) {
      for (int r = 0; r < dy.height; ++r) {
        for (int q = 0; q < dy.width; ++q) {
          const double dz = y.at(n, c, r, q) > 0.0f ? dy.at(n, c, r, q) : 0.0;
          const double xh = cache.normalized.at(n, c, r, q);
          dx.at(n, c, r, q) = static_cast<float>(gamma[c] * cache.inv_std[c] / M *
                                                 (M * dz - sum_dz - xh * sum_dz_xh));
        }
      }
    }
  }
}

void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::uint8_t>& argmax) {
  y = Tensor(x.batch, x.channels, x.height / 2, x.width / 2);
  argmax.assign(y.size(), 0);
  for (int n = 0; n < x.batch; ++n) {
    for (int c = 0; c < x.channels; ++c) {
      for (int r = 0; r < y.height; ++r) {
        for (int q = 0; q < y.width; ++q) {
          float best = x.at(n, c, 2 * r, 2 * q);
          int arg = 0;
          for (int t = 1; t < 4; ++t) {
            const float v = x.at(n, c, 2 * r + t / 2, 2 * q + t % 2);
            if (v > best) {
              best = v;
              arg = t;
            }
          }
          y.at(n, c, r, q) = best;
          argmax[y.offset(n, c, r, q)] = static_cast<std::uint8_t>(arg);
        }
      }
    }
  }
}

}  // namespace bundleseg::kernels::reference
