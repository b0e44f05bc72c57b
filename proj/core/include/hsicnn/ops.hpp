#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsicnn/rng.hpp"
#include "hsicnn/tensor.hpp"

namespace hsicnn {

/// A trainable tensor with its gradient and momentum buffer.
///
/// `shared` marks parameters living in the cross-domain shared store; the
/// trainer scales their learning rate. `decay` selects weight decay (off for
/// biases).
template <typename T>
struct Param {
  std::string name;
  Tensor4<T> value;
  Tensor4<T> grad;
  Tensor4<T> velocity;
  bool shared = false;
  bool decay = true;

  Param() = default;
  Param(std::string name_, Shape4 shape, bool decay_ = true)
      : name(std::move(name_)), value(shape), grad(shape), velocity(shape), decay(decay_) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
struct ConvParams {
  Param<T> weight;  // (out_c, in_c, k, k)
  Param<T> bias;    // (1, out_c, 1, 1)

  std::size_t out_channels() const { return weight.value.n(); }
  std::size_t in_channels() const { return weight.value.c(); }
  std::size_t kernel() const { return weight.value.h(); }
  std::size_t pad() const { return (kernel() - 1) / 2; }
  std::size_t size() const { return weight.size() + bias.size(); }
};

// Kernel must be 1, 3 or 5; padding keeps the spatial size.
template <typename T>
ConvParams<T> make_conv(const std::string& name, std::size_t in_c, std::size_t out_c,
                        std::size_t kernel);

template <typename T>
struct BatchNormParams {
  Param<T> scale;  // (1, c, 1, 1)
  Param<T> shift;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);

  std::size_t channels() const { return running_mean.size(); }
  std::size_t size() const { return scale.size() + shift.size(); }
};

// Identity-configured: scale 1, shift 0, running mean 0, running var 1.
template <typename T>
BatchNormParams<T> make_batchnorm(const std::string& name, std::size_t channels);

enum class Mode { Train, Eval };

// ---- convolution ----------------------------------------------------------

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvParams<T>& p);

template <typename T>
struct ConvGrads {
  Tensor4<T> input;
  Tensor4<T> weight;
  Tensor4<T> bias;
};

// When `need_input_grad` is false the (n, in_c, h, w) input gradient is left empty.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const ConvParams<T>& p,
                             const Tensor4<T>& grad_out, bool need_input_grad = true);

// ---- batch normalization --------------------------------------------------

template <typename T>
struct BatchNormCache {
  Tensor4<T> normalized;
  std::vector<Accum> inv_std;
};

// Training mode normalizes with batch statistics over (n, h, w) and updates the
// running statistics; eval mode uses the running statistics.
template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& input, BatchNormParams<T>& p, Mode mode,
                             BatchNormCache<T>* cache = nullptr);

// Eval-mode only; never touches running statistics.
template <typename T>
Tensor4<T> batchnorm_infer(const Tensor4<T>& input, const BatchNormParams<T>& p);

template <typename T>
struct BatchNormGrads {
  Tensor4<T> input;
  Tensor4<T> scale;
  Tensor4<T> shift;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor4<T>& grad_out, const BatchNormParams<T>& p,
                                     const BatchNormCache<T>& cache);

// ---- activations ----------------------------------------------------------

template <typename T>
Tensor4<T> relu(const Tensor4<T>& input);

// Gradient is gated at input > 0; exactly zero passes nothing.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out);

template <typename T>
struct DropoutResult {
  Tensor4<T> output;
  Tensor4<T> mask;  // 0 or 1/(1-rate) per element; empty in eval mode
};

// Inverted dropout. Throws ConfigError unless 0 <= rate < 1.
template <typename T>
DropoutResult<T> dropout(const Tensor4<T>& input, double rate, Mode mode, Rng& rng);

template <typename T>
Tensor4<T> dropout_backward(const Tensor4<T>& grad_out, const Tensor4<T>& mask);

// ---- loss -----------------------------------------------------------------

template <typename T>
struct LossResult {
  Accum loss = 0;
  Tensor4<T> grad;  // d loss / d logits
};

// Mean over the batch of -log softmax(logits)[label]. Logits are (n, classes, 1, 1).
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, std::span<const int> labels);

// ---- optimizer ------------------------------------------------------------

struct SgdConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

// v <- momentum*v - lr*(g + wd*w); w <- w + v. Weight decay only when p.decay.
// Throws NumericError naming the parameter and iteration on a non-finite gradient.
template <typename T>
void sgd_step(Param<T>& p, const SgdConfig& cfg, std::int64_t iteration = -1);

}  // namespace hsicnn
