#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hsicnn/network.hpp"
#include "hsicnn/ops.hpp"
#include "hsicnn/rng.hpp"

namespace hsicnn {

struct GradCheckOptions {
  double step = 1e-5;  // larger steps cross ReLU kinks inside the backbone
  double tolerance = 1e-3;
  double abs_floor = 1e-6;
};

// Relative error of an element counts only when its absolute error exceeds
// the floor, so pass == (max_rel_error <= tolerance || max_abs_error <= floor).
struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::string fragment;
  std::vector<GradCheckEntry> entries;
  bool pass = true;
};

// A scalar function of some double-precision buffers. `loss` evaluates at the
// current buffer values; `gradient` refreshes the analytic gradient spans.
// Both must be deterministic (fixed dropout masks and the like).
struct Differentiable {
  struct Slot {
    std::string name;
    std::span<double> value;
    std::span<const double> grad;
  };
  std::string name;
  std::vector<Slot> slots;
  std::function<double()> loss;
  std::function<void()> gradient;
  std::shared_ptr<void> state;  // keeps the buffers behind the spans alive
};

// Central differences against the analytic gradient, every element of every slot.
GradCheckReport grad_check(Differentiable& f, const GradCheckOptions& opt = {});

// Fragments used by the oracle suite. Inputs are caller-supplied so that
// degenerate cases (all-zero input, fixed masks) can be checked too.
Differentiable conv_fragment(const Tensor4<double>& input, ConvParams<double> params);
Differentiable batchnorm_fragment(const Tensor4<double>& input, BatchNormParams<double> params,
                                  const Tensor4<double>& loss_weights);
Differentiable relu_fragment(const Tensor4<double>& input, const Tensor4<double>& loss_weights);
Differentiable dropout_fragment(const Tensor4<double>& input, double rate, std::uint64_t mask_seed,
                                const Tensor4<double>& loss_weights);
Differentiable softmax_fragment(const Tensor4<double>& logits, std::vector<int> labels);
Differentiable backbone_fragment(const NetworkSpec& spec, const Tensor4<double>& input,
                                 std::vector<int> labels, std::uint64_t seed);

// Randomized suite over every layer type and the full backbone
// (bands=3, filters=4, patch=5, classes=3), one report per fragment.
std::vector<GradCheckReport> run_oracle_suite(std::uint64_t seed, const GradCheckOptions& opt = {});

Tensor4<double> random_tensor(Shape4 shape, Rng& rng, double scale = 1.0);

// Values with |x| in [margin, 1], random sign: keeps ReLU inputs off the kink.
Tensor4<double> random_tensor_away_from_zero(Shape4 shape, Rng& rng, double margin);

}  // namespace hsicnn
