#pragma once

#include <span>
#include <string>
#include <vector>

#include "bundleseg/error.hpp"
#include "bundleseg/tensor.hpp"

namespace bundleseg {

inline constexpr double kDiceSmoothing = 1e-5;

/// Masked soft Dice loss over channel-major data: `channels` equal contiguous
/// runs, each covering batch and space of one output channel.
///
///   L_c = 1 - (2 sum m p g + eps) / (sum m p + sum m g + eps),  loss = mean_c L_c
///
/// Voxels with m = 0 drop out of every sum, so a channel with an empty mask
/// scores exactly 0. When `grad` is non-empty it receives dloss/dpred.
template <typename T>
double masked_dice_loss(std::span<const T> pred, std::span<const T> target, std::span<const T> mask,
                        int channels, std::span<T> grad = {}, double eps = kDiceSmoothing) {
  if (channels < 1 || pred.size() != target.size() || pred.size() != mask.size() ||
      pred.size() % static_cast<std::size_t>(channels) != 0 ||
      (!grad.empty() && grad.size() != pred.size())) {
    throw Error(ErrorKind::shape_mismatch, "dice loss inputs have mismatched shapes");
  }
  const std::size_t per = pred.size() / channels;
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    const std::size_t base = c * per;
    double s_pg = 0.0, s_p = 0.0, s_g = 0.0;
    for (std::size_t i = base; i < base + per; ++i) {
      const double m = mask[i], g = target[i];
      if ((m != 0.0 && m != 1.0) || (g != 0.0 && g != 1.0)) {
        throw Error(ErrorKind::invalid_argument, "dice loss target and mask must be binary");
      }
      if (m == 0.0) continue;
      const double p = pred[i];
      s_pg += p * g;
      s_p += p;
      s_g += g;
    }
    const double num = 2.0 * s_pg + eps;
    const double den = s_p + s_g + eps;
    total += 1.0 - num / den;
    if (!grad.empty()) {
      // d/dp_i of -(num/den) = -(2 m g den - num m) / den^2, then / C for the mean
      const double scale = 1.0 / (den * den * channels);
      for (std::size_t i = base; i < base + per; ++i) {
        const double m = mask[i];
        grad[i] = m == 0.0 ? T(0) : static_cast<T>(-(2.0 * target[i] * den - num) * scale);
      }
    }
  }
  return total / channels;
}

inline double masked_dice_loss(const Tensor& pred, const Tensor& target, const Tensor& mask,
                               Tensor* grad = nullptr) {
  if (!pred.same_shape(target) || !pred.same_shape(mask)) {
    throw Error(ErrorKind::shape_mismatch, "dice loss: prediction, target and mask shapes differ");
  }
  std::span<float> g;
  if (grad) {
    if (!grad->same_shape(pred)) *grad = Tensor(pred.batch, pred.channels, pred.height, pred.width);
    g = grad->data;
  }
  return masked_dice_loss<float>(pred.data, target.data, mask.data, pred.channels, g);
}

}  // namespace bundleseg
