#include "bundleseg/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "bundleseg/error.hpp"
#include "json.hpp"

namespace bundleseg {
namespace {

constexpr float kBatchNormEps = 1e-5f;
constexpr float kBatchNormMomentum = 0.1f;

Parameter make_param(std::string name, std::vector<int> shape, float fill, bool trainable = true) {
  Parameter p;
  p.name = std::move(name);
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  p.shape = std::move(shape);
  p.value.assign(n, fill);
  p.grad.assign(trainable ? n : 0, 0.0f);
  p.trainable = trainable;
  return p;
}

struct Conv {
  int in = 0, out = 0, kernel = 3;
  bool has_bias = false;
  Parameter weight, bias;
  const Tensor* input = nullptr;

  Conv() = default;
  Conv(const std::string& name, int in_, int out_, int kernel_, bool bias_, std::mt19937_64& rng)
      : in(in_), out(out_), kernel(kernel_), has_bias(bias_) {
    weight = make_param(name + ".weight", {out, in, kernel, kernel}, 0.0f);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (in * kernel * kernel)));
    for (float& w : weight.value) w = static_cast<float>(normal(rng));
    if (has_bias) bias = make_param(name + ".bias", {out}, 0.0f);
  }

  void forward(const Tensor& x, Tensor& y) {
    input = &x;
    kernels::conv2d_forward(x, weight.value, has_bias ? std::span<const float>(bias.value) : std::span<const float>(),
                            out, kernel, y);
  }
  void backward(const Tensor& dy, Tensor* dx) {
    kernels::conv2d_backward(*input, weight.value, kernel, dy, dx, weight.grad,
                             has_bias ? std::span<float>(bias.grad) : std::span<float>());
  }
  void collect(std::vector<Parameter*>& out_params) {
    out_params.push_back(&weight);
    if (has_bias) out_params.push_back(&bias);
  }
};

struct BatchNormReLU {
  Parameter gamma, beta, running_mean, running_var;
  kernels::BatchNormCache cache;
  const Tensor* output = nullptr;

  BatchNormReLU() = default;
  BatchNormReLU(const std::string& name, int channels) {
    gamma = make_param(name + ".gamma", {channels}, 1.0f);
    beta = make_param(name + ".beta", {channels}, 0.0f);
    running_mean = make_param(name + ".running_mean", {channels}, 0.0f, false);
    running_var = make_param(name + ".running_var", {channels}, 1.0f, false);
  }

  void forward(const Tensor& x, Tensor& y, Mode mode) {
    if (mode == Mode::train) {
      kernels::batchnorm_relu_forward_train(x, gamma.value, beta.value, running_mean.value,
                                            running_var.value, kBatchNormMomentum, kBatchNormEps,
                                            y, cache);
    } else {
      kernels::batchnorm_relu_forward_eval(x, gamma.value, beta.value, running_mean.value,
                                           running_var.value, kBatchNormEps, y);
    }
    output = &y;
  }
  void backward(const Tensor& dy, Tensor& dx) {
    kernels::batchnorm_relu_backward(*output, dy, cache, gamma.value, dx, gamma.grad, beta.grad);
  }
  void collect(std::vector<Parameter*>& out_params) {
    out_params.insert(out_params.end(), {&gamma, &beta, &running_mean, &running_var});
  }
};

// (conv 3x3 -> BN -> ReLU) x 2
struct Block {
  Conv conv1, conv2;
  BatchNormReLU bn1, bn2;
  Tensor z1, a1, z2, out;
  Tensor g_z2, g_a1, g_z1;

  Block() = default;
  Block(const std::string& name, int in, int width, std::mt19937_64& rng)
      : conv1(name + ".conv1", in, width, 3, false, rng),
        conv2(name + ".conv2", width, width, 3, false, rng),
        bn1(name + ".bn1", width),
        bn2(name + ".bn2", width) {}

  const Tensor& forward(const Tensor& x, Mode mode) {
    conv1.forward(x, z1);
    bn1.forward(z1, a1, mode);
    conv2.forward(a1, z2);
    bn2.forward(z2, out, mode);
    return out;
  }
  void backward(const Tensor& g_out, Tensor& g_in) {
    bn2.backward(g_out, g_z2);
    conv2.backward(g_z2, &g_a1);
    bn1.backward(g_a1, g_z1);
    conv1.backward(g_z1, &g_in);
  }
  void collect(std::vector<Parameter*>& p) {
    conv1.collect(p);
    bn1.collect(p);
    conv2.collect(p);
    bn2.collect(p);
  }
};

struct Pool {
  Tensor out;
  std::vector<std::uint8_t> argmax;
};

// nearest 2x upsample followed by a biased 3x3 convolution
struct UpConv {
  Conv conv;
  Tensor up, out;
  Tensor g_up;

  UpConv() = default;
  UpConv(const std::string& name, int in, int width, std::mt19937_64& rng)
      : conv(name + ".conv", in, width, 3, true, rng) {}

  const Tensor& forward(const Tensor& x) {
    kernels::upsample2_forward(x, up);
    conv.forward(up, out);
    return out;
  }
  void backward(const Tensor& g_out, Tensor& g_in) {
    conv.backward(g_out, &g_up);
    kernels::upsample2_backward(g_up, g_in);
  }
};

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.batch, a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

}  // namespace

void UNetConfig::validate() const {
  if (in_channels < 1 || out_channels < 1 || base_width < 1) {
    throw Error(ErrorKind::config, "U-Net channel counts and base width must be >= 1");
  }
}

std::string UNetConfig::fingerprint() const {
  return "unet2d-e5b1d4/in=" + std::to_string(in_channels) + "/out=" + std::to_string(out_channels) +
         "/width=" + std::to_string(base_width);
}

struct UNet::Impl {
  Block enc[5];
  Pool pool[4];
  Block bottleneck;
  UpConv up[4];
  Tensor cat[4];
  Block dec[4];
  Conv head;

  Tensor input, logits, probs;
  Mode last_mode = Mode::eval;

  // backward scratch
  Tensor g_logits, g_dec[4], g_cat_in, g_up_in[4], g_bottleneck_in, g_enc[5], g_pool_in;

  explicit Impl(const UNetConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    const int w = cfg.base_width;
    int in = cfg.in_channels;
    for (int i = 0; i < 5; ++i) {
      enc[i] = Block("enc" + std::to_string(i + 1), in, w << i, rng);
      in = w << i;
    }
    bottleneck = Block("bottleneck", 16 * w, 16 * w, rng);
    in = 16 * w;
    for (int i = 0; i < 4; ++i) {
      const int skip = w << (3 - i);
      up[i] = UpConv("dec" + std::to_string(i + 1) + ".up", in, skip, rng);
      dec[i] = Block("dec" + std::to_string(i + 1), 2 * skip, skip, rng);
      in = skip;
    }
    head = Conv("head", w, cfg.out_channels, 1, true, rng);
  }

  void collect(std::vector<Parameter*>& p) {
    for (auto& b : enc) b.collect(p);
    bottleneck.collect(p);
    for (int i = 0; i < 4; ++i) {
      up[i].conv.collect(p);
      dec[i].collect(p);
    }
    head.collect(p);
  }
};

UNet::UNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  impl_ = std::make_unique<Impl>(config_);
}

UNet::~UNet() = default;
UNet::UNet(UNet&&) noexcept = default;
UNet& UNet::operator=(UNet&&) noexcept = default;

Tensor UNet::forward(const Tensor& input, Mode mode) {
  if (input.channels != config_.in_channels) {
    throw Error(ErrorKind::shape_mismatch, "network expects " + std::to_string(config_.in_channels) +
                                               " input channels, got " + std::to_string(input.channels));
  }
  if (input.batch < 1 || input.height < kSpatialMultiple || input.width < kSpatialMultiple ||
      input.height % kSpatialMultiple != 0 || input.width % kSpatialMultiple != 0) {
    throw Error(ErrorKind::shape_mismatch, "input spatial size " + std::to_string(input.height) + "x" +
                                               std::to_string(input.width) +
                                               " is not a positive multiple of 16; pad first");
  }
  Impl& m = *impl_;
  m.last_mode = mode;
  m.input = input;
  const Tensor* x = &m.input;
  for (int i = 0; i < 5; ++i) {
    x = &m.enc[i].forward(*x, mode);
    if (i < 4) {
      kernels::maxpool2_forward(*x, m.pool[i].out, m.pool[i].argmax);
      x = &m.pool[i].out;
    }
  }
  x = &m.bottleneck.forward(*x, mode);
  for (int i = 0; i < 4; ++i) {
    const Tensor& upsampled = m.up[i].forward(*x);
    m.cat[i] = concat_channels(upsampled, m.enc[3 - i].out);
    x = &m.dec[i].forward(m.cat[i], mode);
  }
  m.head.forward(*x, m.logits);
  kernels::sigmoid_forward(m.logits, m.probs);
  return m.probs;
}

void UNet::backward(const Tensor& grad_probabilities) {
  Impl& m = *impl_;
  if (m.last_mode != Mode::train) {
    throw Error(ErrorKind::invalid_argument, "backward requires a preceding train-mode forward");
  }
  if (!grad_probabilities.same_shape(m.probs)) {
    throw Error(ErrorKind::shape_mismatch, "gradient shape differs from the last output");
  }
  m.g_logits = Tensor(m.probs.batch, m.probs.channels, m.probs.height, m.probs.width);
  for (std::size_t i = 0; i < m.probs.size(); ++i) {
    const float p = m.probs.data[i];
    m.g_logits.data[i] = grad_probabilities.data[i] * p * (1.0f - p);
  }
  Tensor g_x;
  m.head.backward(m.g_logits, &g_x);

  Tensor skip_grad[4];
  for (int i = 3; i >= 0; --i) {
    m.dec[i].backward(g_x, m.g_cat_in);
    const std::size_t up_size = m.up[i].out.size();
    Tensor g_up(m.up[i].out.batch, m.up[i].out.channels, m.up[i].out.height, m.up[i].out.width);
    std::copy(m.g_cat_in.data.begin(), m.g_cat_in.data.begin() + static_cast<std::ptrdiff_t>(up_size),
              g_up.data.begin());
    const Tensor& skip = m.enc[3 - i].out;
    skip_grad[3 - i] = Tensor(skip.batch, skip.channels, skip.height, skip.width);
    std::copy(m.g_cat_in.data.begin() + static_cast<std::ptrdiff_t>(up_size), m.g_cat_in.data.end(),
              skip_grad[3 - i].data.begin());
    m.up[i].backward(g_up, g_x);
  }
  m.bottleneck.backward(g_x, m.g_bottleneck_in);
  g_x = std::move(m.g_bottleneck_in);
  for (int i = 4; i >= 0; --i) {
    if (i < 4) {
      // g_x currently holds the gradient w.r.t. pool[i] output
      Tensor g_enc_out;
      kernels::maxpool2_backward(g_x, m.pool[i].argmax, g_enc_out);
      for (std::size_t t = 0; t < g_enc_out.size(); ++t) g_enc_out.data[t] += skip_grad[i].data[t];
      g_x = std::move(g_enc_out);
    }
    Tensor g_in;
    m.enc[i].backward(g_x, g_in);
    g_x = std::move(g_in);
  }
}

std::vector<Parameter*> UNet::parameters() {
  std::vector<Parameter*> p;
  impl_->collect(p);
  return p;
}

std::size_t UNet::parameter_count() const {
  std::size_t n = 0;
  for (Parameter* p : const_cast<UNet*>(this)->parameters()) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

ModelWeights UNet::weights() const {
  ModelWeights w;
  w.fingerprint = config_.fingerprint();
  for (Parameter* p : const_cast<UNet*>(this)->parameters()) {
    w.tensors.push_back({p->name, p->shape, p->value});
  }
  return w;
}

void UNet::load(const ModelWeights& weights) {
  if (weights.fingerprint != config_.fingerprint()) {
    throw Error(ErrorKind::config, "checkpoint fingerprint '" + weights.fingerprint +
                                       "' does not match model '" + config_.fingerprint() + "'");
  }
  auto params = parameters();
  if (params.size() != weights.tensors.size()) {
    throw Error(ErrorKind::config, "checkpoint tensor count does not match the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& t = weights.tensors[i];
    if (t.name != params[i]->name || t.values.size() != params[i]->value.size()) {
      throw Error(ErrorKind::config, "checkpoint tensor '" + t.name + "' does not match '" +
                                         params[i]->name + "'");
    }
    params[i]->value = t.values;
  }
}

namespace {
constexpr char kCheckpointMagic[8] = {'B', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const std::filesystem::path& path, const ModelWeights& weights,
                     const CheckpointInfo& info) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["fingerprint"] = weights.fingerprint;
  manifest["epoch"] = info.epoch;
  manifest["validation_dice"] = info.validation_dice;
  manifest["config"] = {{"in_channels", info.config.in_channels},
                        {"out_channels", info.config.out_channels},
                        {"base_width", info.config.base_width},
                        {"seed", info.config.seed}};
  auto& list = manifest["tensors"] = nlohmann::json::array();
  for (const auto& t : weights.tensors) {
    list.push_back({{"name", t.name}, {"shape", t.shape}, {"count", t.values.size()}});
  }
  const std::string text = manifest.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 8);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : weights.tensors) {
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorKind::io, "write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelWeights load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw Error(ErrorKind::format, path.string() + " is not a bundleseg checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (std::uint64_t{1} << 32)) throw Error(ErrorKind::format, "corrupt checkpoint manifest");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  ModelWeights w;
  try {
    const auto manifest = nlohmann::json::parse(text);
    w.fingerprint = manifest.at("fingerprint").get<std::string>();
    for (const auto& t : manifest.at("tensors")) {
      NamedTensor nt;
      nt.name = t.at("name").get<std::string>();
      nt.shape = t.at("shape").get<std::vector<int>>();
      nt.values.resize(t.at("count").get<std::size_t>());
      in.read(reinterpret_cast<char*>(nt.values.data()),
              static_cast<std::streamsize>(nt.values.size() * sizeof(float)));
      if (!in) throw Error(ErrorKind::format, "truncated checkpoint " + path.string());
      w.tensors.push_back(std::move(nt));
    }
    if (info) {
      info->fingerprint = w.fingerprint;
      info->epoch = manifest.at("epoch").get<int>();
      info->validation_dice = manifest.at("validation_dice").get<double>();
      const auto& c = manifest.at("config");
      info->config.in_channels = c.at("in_channels").get<int>();
      info->config.out_channels = c.at("out_channels").get<int>();
      info->config.base_width = c.at("base_width").get<int>();
      info->config.seed = c.at("seed").get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, path.string() + ": bad manifest: " + e.what());
  }
  return w;
}

Adamax::Adamax(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adamax::step(const std::vector<Parameter*>& params) {
  if (m_.size() != params.size()) {
    m_.assign(params.size(), {});
    u_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->trainable) continue;
      m_[i].assign(params[i]->value.size(), 0.0f);
      u_[i].assign(params[i]->value.size(), 0.0f);
    }
  }
  ++t_;
  const double step_size = lr_ / (1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float eps = static_cast<float>(eps_);
  const float lr = static_cast<float>(step_size);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    float* m = m_[i].data();
    float* u = u_[i].data();
    const std::size_t n = p.value.size();
#pragma omp parallel for if (n > 4096)
    for (std::size_t j = 0; j < n; ++j) {
      const float g = p.grad[j];
      m[j] = b1 * m[j] + (1.0f - b1) * g;
      u[j] = std::max(b2 * u[j], std::abs(g) + eps);
      p.value[j] -= lr * m[j] / u[j];
    }
  }
}

}  // namespace bundleseg
