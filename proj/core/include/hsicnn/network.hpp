#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "hsicnn/ops.hpp"
#include "hsicnn/rng.hpp"
#include "hsicnn/tensor.hpp"

namespace hsicnn {

struct NetworkSpec {
  std::size_t bands = 0;
  std::size_t classes = 0;
  std::size_t patch = 5;
  std::size_t filters = 128;
  std::size_t residual_modules = 2;
  double dropout_rate = 0.5;

  // Throws SpecError.
  void validate() const;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// One branch per source dataset. Branches must agree on everything that
// shapes the shared trunk; bands and classes may differ.
struct CrossDomainSpec {
  std::vector<NetworkSpec> branches;

  void validate() const;
  friend bool operator==(const CrossDomainSpec&, const CrossDomainSpec&) = default;
};

struct LayerTag {
  std::string name;  // C1x1, C3x3, C5x5, C2, ResModule[k].Conv[j], C7, C8, C9
  bool shared = false;
};

template <typename T>
struct ConvBn {
  ConvParams<T> conv;
  BatchNormParams<T> bn;
};

// conv -> BN -> ReLU -> conv -> BN, plus the skip, then ReLU.
template <typename T>
struct ResidualModule {
  ConvBn<T> first;
  ConvBn<T> second;
};

// Intermediate values kept by a training-mode forward for the backward pass.
template <typename T>
struct ForwardTape {
  struct ConvBnTape {
    Tensor4<T> input;
    BatchNormCache<T> bn;
    Tensor4<T> pre_relu;
  };
  struct ResidualTape {
    ConvBnTape first;
    Tensor4<T> second_input;
    BatchNormCache<T> second_bn;
    Tensor4<T> sum;
  };
  ConvBnTape bank[3];
  ConvBnTape c2;
  std::vector<ResidualTape> residual;
  ConvBnTape c7;
  Tensor4<T> c7_mask;
  ConvBnTape c8;
  Tensor4<T> c8_mask;
  Tensor4<T> c9_input;
  Shape4 c9_output;
};

/// The 9-layer backbone: multi-scale bank {1x1, 3x3, 5x5}, C2, residual
/// modules, C7, C8, C9. Residual modules are held by shared pointer so that
/// cross-domain branches can reference one physical store.
template <typename T>
class Network {
 public:
  Network(const NetworkSpec& spec, std::vector<std::shared_ptr<ResidualModule<T>>> residual);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkSpec& spec() const { return spec_; }

  // Logits (n, classes, 1, 1) taken at the center pixel of C9's output.
  // Training mode updates BN running statistics and draws dropout masks from rng.
  Tensor4<T> forward(const Tensor4<T>& batch, Mode mode, Rng& rng, ForwardTape<T>* tape = nullptr);

  // Eval-mode forward; does not mutate the network.
  Tensor4<T> predict(const Tensor4<T>& batch) const;

  // Accumulates parameter gradients (+=) for the tape's forward pass.
  // Returns the gradient with respect to the input batch when requested.
  Tensor4<T> backward(const ForwardTape<T>& tape, const Tensor4<T>& grad_logits,
                      bool need_input_grad = false);

  void zero_grad();

  // Stable order: bank, C2, residual modules, C7, C8, C9.
  std::vector<Param<T>*> parameters();
  std::vector<const Param<T>*> parameters() const;
  std::vector<BatchNormParams<T>*> batchnorms();
  std::vector<const BatchNormParams<T>*> batchnorms() const;

  std::vector<LayerTag> layer_tags() const;
  std::size_t weighted_layer_count() const { return 5 + 2 * residual_.size(); }
  std::size_t parameter_count() const;

  ConvBn<T>& bank(std::size_t i) { return bank_[i]; }
  const ConvBn<T>& bank(std::size_t i) const { return bank_[i]; }
  ConvBn<T>& c2() { return c2_; }
  const ConvBn<T>& c2() const { return c2_; }
  ConvBn<T>& c7() { return c7_; }
  ConvBn<T>& c8() { return c8_; }
  ConvParams<T>& c9() { return c9_; }
  const ConvParams<T>& c9() const { return c9_; }
  std::size_t residual_count() const { return residual_.size(); }
  ResidualModule<T>& residual(std::size_t k) { return *residual_[k]; }
  const ResidualModule<T>& residual(std::size_t k) const { return *residual_[k]; }
  const std::shared_ptr<ResidualModule<T>>& residual_ptr(std::size_t k) const { return residual_[k]; }

  // Deep copy; residual modules are duplicated, not aliased.
  Network clone() const;

 private:
  void check_input(const Tensor4<T>& batch) const;

  NetworkSpec spec_;
  ConvBn<T> bank_[3];
  ConvBn<T> c2_;
  std::vector<std::shared_ptr<ResidualModule<T>>> residual_;
  ConvBn<T> c7_;
  ConvBn<T> c8_;
  ConvParams<T> c9_;
};

template <typename T>
std::shared_ptr<ResidualModule<T>> make_residual_module(std::size_t index, std::size_t filters);

template <typename T>
Network<T> build_backbone(const NetworkSpec& spec, Rng& rng);

// Gaussian(0, 0.01) for the bank, C2 and C9; Gaussian(0, 0.005) for residual
// modules, C7 and C8. Biases 0, BN reset to identity. Velocities cleared.
template <typename T>
void init_weights(Network<T>& net, Rng& rng);

template <typename T>
class CrossDomainNetwork {
 public:
  CrossDomainNetwork(CrossDomainSpec spec, std::vector<std::shared_ptr<ResidualModule<T>>> shared,
                     std::vector<Network<T>> branches);

  const CrossDomainSpec& spec() const { return spec_; }
  std::size_t size() const { return branches_.size(); }
  Network<T>& branch(std::size_t i) { return branches_.at(i); }
  const Network<T>& branch(std::size_t i) const { return branches_.at(i); }
  std::size_t residual_count() const { return shared_.size(); }
  ResidualModule<T>& shared_module(std::size_t k) { return *shared_[k]; }
  const ResidualModule<T>& shared_module(std::size_t k) const { return *shared_[k]; }

  // Each physical parameter exactly once: branch-private ones per branch, then the shared store.
  std::vector<Param<T>*> physical_parameters();
  std::vector<Param<T>*> shared_parameters();
  std::size_t physical_parameter_count() const;

 private:
  CrossDomainSpec spec_;
  std::vector<std::shared_ptr<ResidualModule<T>>> shared_;
  std::vector<Network<T>> branches_;
};

template <typename T>
CrossDomainNetwork<T> build_cross_domain(const CrossDomainSpec& spec, Rng& rng);

// New target network whose residual modules (conv weights, biases, BN scale and
// shift) are copied from the pre-trained shared store. BN running statistics
// and all other layers start fresh.
template <typename T>
Network<T> transfer_shared(const CrossDomainNetwork<T>& pretrained, const NetworkSpec& target,
                           Rng& rng);

}  // namespace hsicnn
