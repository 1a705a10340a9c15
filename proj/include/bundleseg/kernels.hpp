#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bundleseg/tensor.hpp"

// Layer kernels used by the U-Net. The functions in `kernels` are the
// production path (OpenMP across channels, convolutions lowered to SGEMM);
// `kernels::reference` holds straightforward serial loops with the same
// signatures, kept for the equivalence tests and the benchmark.
namespace bundleseg::kernels {

/// Stride-1 "same" convolution with an odd square kernel.
/// weight layout [out][in][ky][kx]; bias may be empty.
void conv2d_forward(const Tensor& x, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, int kernel, Tensor& y);

/// Overwrites dweight/dbias; dx is skipped when null.
void conv2d_backward(const Tensor& x, std::span<const float> weight, int kernel, const Tensor& dy,
                     Tensor* dx, std::span<float> dweight, std::span<float> dbias);

struct BatchNormCache {
  Tensor normalized;           // x-hat
  std::vector<float> inv_std;  // per channel
};

/// y = relu(gamma * (x - mean) / sqrt(var + eps) + beta) with batch statistics.
/// Running statistics are updated with `momentum` (unbiased variance).
void batchnorm_relu_forward_train(const Tensor& x, std::span<const float> gamma,
                                  std::span<const float> beta, std::span<float> running_mean,
                                  std::span<float> running_var, float momentum, float eps,
                                  Tensor& y, BatchNormCache& cache);

void batchnorm_relu_forward_eval(const Tensor& x, std::span<const float> gamma,
                                 std::span<const float> beta, std::span<const float> running_mean,
                                 std::span<const float> running_var, float eps, Tensor& y);

void batchnorm_relu_backward(const Tensor& y, const Tensor& dy, const BatchNormCache& cache,
                             std::span<const float> gamma, Tensor& dx, std::span<float> dgamma,
                             std::span<float> dbeta);

/// 2x2 max pooling; argmax holds the winning position (0..3) per output element.
void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::uint8_t>& argmax);
void maxpool2_backward(const Tensor& dy, const std::vector<std::uint8_t>& argmax, Tensor& dx);

void upsample2_forward(const Tensor& x, Tensor& y);
void upsample2_backward(const Tensor& dy, Tensor& dx);

void sigmoid_forward(const Tensor& x, Tensor& y);

namespace reference {

void conv2d_forward(const Tensor& x, std::span<const float> weight, std::span<const float> bias,
                    int out_channels, int kernel, Tensor& y);
void conv2d_backward(const Tensor& x, std::span<const float> weight, int kernel, const Tensor& dy,
                     Tensor* dx, std::span<float> dweight, std::span<float> dbias);
void batchnorm_relu_forward_train(const Tensor& x, std::span<const float> gamma,
                                  std::span<const float> beta, std::span<float> running_mean,
                                  std::span<float> running_var, float momentum, float eps,
                                  Tensor& y, BatchNormCache& cache);
void batchnorm_relu_backward(const Tensor& y, const Tensor& dy, const BatchNormCache& cache,
                             std::span<const float> gamma, Tensor& dx, std::span<float> dgamma,
                             std::span<float> dbeta);
void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::uint8_t>& argmax);

}  // namespace reference
}  // namespace bundleseg::kernels
