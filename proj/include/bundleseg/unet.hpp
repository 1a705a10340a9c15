#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "bundleseg/kernels.hpp"
#include "bundleseg/tensor.hpp"

namespace bundleseg {

struct UNetConfig {
  int in_channels = 9;
  int out_channels = 16;
  int base_width = 64;
  std::uint64_t seed = 0;

  void validate() const;
  /// Architecture identity; the seed is deliberately not part of it.
  std::string fingerprint() const;
};

/// Spatial dimensions fed to the network must be multiples of this.
inline constexpr int kSpatialMultiple = 16;

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool trainable = true;  // batch-norm running statistics are not
};

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

struct ModelWeights {
  std::string fingerprint;
  std::vector<NamedTensor> tensors;
};

enum class Mode { train, eval };

/// 2-D U-Net: encoder blocks E1..E5 (widths w..16w, 2x2 max pool between
/// them), bottleneck at E5 resolution, decoders D1..D4 that upsample
/// (nearest 2x + 3x3 conv), concatenate the E4..E1 skip and apply a block.
/// Every block is (3x3 conv -> batch norm -> ReLU) twice. A 1x1 convolution
/// and a channel-wise sigmoid produce the output probabilities.
class UNet {
 public:
  explicit UNet(const UNetConfig& config);
  ~UNet();
  UNet(UNet&&) noexcept;
  UNet& operator=(UNet&&) noexcept;

  const UNetConfig& config() const { return config_; }

  /// Probabilities in (0,1) with shape (batch, out_channels, H, W).
  /// Throws if H or W is not a multiple of 16 or the channel count is wrong.
  Tensor forward(const Tensor& input, Mode mode);

  /// Backpropagates dloss/dprobabilities from the last train-mode forward and
  /// overwrites every parameter gradient.
  void backward(const Tensor& grad_probabilities);

  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

  ModelWeights weights() const;
  /// Throws ErrorKind::config on a fingerprint mismatch.
  void load(const ModelWeights& weights);

 private:
  struct Impl;
  UNetConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Archive: "BSEGCKPT" magic, u64 manifest length, JSON manifest, then the
/// float32 tensor payload in manifest order.
struct CheckpointInfo {
  std::string fingerprint;
  int epoch = 0;
  double validation_dice = 0.0;
  UNetConfig config;
};

void save_checkpoint(const std::filesystem::path& path, const ModelWeights& weights,
                     const CheckpointInfo& info);
ModelWeights load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// Adamax (infinity-norm Adam). Keeps one moment pair per trainable parameter.
class Adamax {
 public:
  explicit Adamax(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

  void step(const std::vector<Parameter*>& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, u_;
};

}  // namespace bundleseg
