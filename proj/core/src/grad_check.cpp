#include "hsicnn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace hsicnn {

namespace {

std::span<double> values(Param<double>& p) { return p.value.span(); }
std::span<const double> grads(const Param<double>& p) { return p.grad.span(); }

// Writes into the existing buffer so the slot spans stay valid.
void assign(Tensor4<double>& dst, const Tensor4<double>& src) {
  std::copy(src.vec().begin(), src.vec().end(), dst.vec().begin());
}

double weighted_sum(const Tensor4<double>& out, const Tensor4<double>& w) {
  Accum s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
  return s;
}

}  // namespace

Tensor4<double> random_tensor(Shape4 shape, Rng& rng, double scale) {
  Tensor4<double> t(shape);
  for (auto& v : t.vec()) v = scale * rng.normal();
  return t;
}

Tensor4<double> random_tensor_away_from_zero(Shape4 shape, Rng& rng, double margin) {
  Tensor4<double> t(shape);
  for (auto& v : t.vec()) {
    const double mag = margin + (1.0 - margin) * rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

GradCheckReport grad_check(Differentiable& f, const GradCheckOptions& opt) {
  GradCheckReport report;
  report.fragment = f.name;
  f.gradient();
  // Copy analytic grads first: loss evaluations may reuse the same buffers.
  std::vector<std::vector<double>> analytic;
  for (const auto& s : f.slots) analytic.emplace_back(s.grad.begin(), s.grad.end());

  for (std::size_t si = 0; si < f.slots.size(); ++si) {
    auto& slot = f.slots[si];
    GradCheckEntry e;
    e.name = slot.name;
    e.elements = slot.value.size();
    for (std::size_t i = 0; i < slot.value.size(); ++i) {
      const double orig = slot.value[i];
      slot.value[i] = orig + opt.step;
      const double up = f.loss();
      slot.value[i] = orig - opt.step;
      const double down = f.loss();
      slot.value[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic[si][i];
      const double abs_err = std::abs(a - numeric);
      e.max_abs_error = std::max(e.max_abs_error, abs_err);
      if (abs_err > opt.abs_floor) {
        const double rel = abs_err / std::max(std::abs(a), std::abs(numeric));
        e.max_rel_error = std::max(e.max_rel_error, rel);
      }
    }
    e.pass = e.max_rel_error <= opt.tolerance || e.max_abs_error <= opt.abs_floor;
    report.pass = report.pass && e.pass;
    report.entries.push_back(std::move(e));
  }
  return report;
}

Differentiable conv_fragment(const Tensor4<double>& input, ConvParams<double> params) {
  struct State {
    Tensor4<double> input, grad_input;
    ConvParams<double> p;
  };
  auto st = std::make_shared<State>();
  st->input = input;
  st->grad_input = Tensor4<double>(input.shape());
  st->p = std::move(params);

  Differentiable f;
  f.name = "conv" + std::to_string(st->p.kernel()) + "x" + std::to_string(st->p.kernel());
  f.state = st;
  f.slots = {{"input", st->input.span(), st->grad_input.span()},
             {st->p.weight.name, values(st->p.weight), grads(st->p.weight)},
             {st->p.bias.name, values(st->p.bias), grads(st->p.bias)}};
  State* s = st.get();
  f.loss = [s] {
    const Tensor4<double> out = conv2d_forward(s->input, s->p);
    Accum l = 0;
    for (double v : out.vec()) l += v * v;
    return l / 2;
  };
  f.gradient = [s] {
    const Tensor4<double> out = conv2d_forward(s->input, s->p);
    ConvGrads<double> g = conv2d_backward(s->input, s->p, out);
    assign(s->grad_input, g.input);
    assign(s->p.weight.grad, g.weight);
    assign(s->p.bias.grad, g.bias);
  };
  return f;
}

Differentiable batchnorm_fragment(const Tensor4<double>& input, BatchNormParams<double> params,
                                  const Tensor4<double>& loss_weights) {
  struct State {
    Tensor4<double> input, grad_input, weights;
    BatchNormParams<double> p;
  };
  auto st = std::make_shared<State>();
  st->input = input;
  st->grad_input = Tensor4<double>(input.shape());
  st->weights = loss_weights;
  st->p = std::move(params);

  Differentiable f;
  f.name = "batchnorm";
  f.state = st;
  f.slots = {{"input", st->input.span(), st->grad_input.span()},
             {st->p.scale.name, values(st->p.scale), grads(st->p.scale)},
             {st->p.shift.name, values(st->p.shift), grads(st->p.shift)}};
  State* s = st.get();
  f.loss = [s] {
    BatchNormParams<double> scratch = s->p;
    return weighted_sum(batchnorm_forward(s->input, scratch, Mode::Train), s->weights);
  };
  f.gradient = [s] {
    BatchNormParams<double> scratch = s->p;
    BatchNormCache<double> cache;
    batchnorm_forward(s->input, scratch, Mode::Train, &cache);
    BatchNormGrads<double> g = batchnorm_backward(s->weights, s->p, cache);
    assign(s->grad_input, g.input);
    assign(s->p.scale.grad, g.scale);
    assign(s->p.shift.grad, g.shift);
  };
  return f;
}

Differentiable relu_fragment(const Tensor4<double>& input, const Tensor4<double>& loss_weights) {
  struct State {
    Tensor4<double> input, grad_input, weights;
  };
  auto st = std::make_shared<State>(State{input, Tensor4<double>(input.shape()), loss_weights});
  Differentiable f;
  f.name = "relu";
  f.state = st;
  f.slots = {{"input", st->input.span(), st->grad_input.span()}};
  State* s = st.get();
  f.loss = [s] { return weighted_sum(relu(s->input), s->weights); };
  f.gradient = [s] { assign(s->grad_input, relu_backward(s->input, s->weights)); };
  return f;
}

Differentiable dropout_fragment(const Tensor4<double>& input, double rate, std::uint64_t mask_seed,
                                const Tensor4<double>& loss_weights) {
  struct State {
    Tensor4<double> input, grad_input, weights;
    double rate;
    std::uint64_t seed;
  };
  auto st = std::make_shared<State>(
      State{input, Tensor4<double>(input.shape()), loss_weights, rate, mask_seed});
  Differentiable f;
  f.name = "dropout";
  f.state = st;
  f.slots = {{"input", st->input.span(), st->grad_input.span()}};
  State* s = st.get();
  f.loss = [s] {
    Rng rng(s->seed);
    return weighted_sum(dropout(s->input, s->rate, Mode::Train, rng).output, s->weights);
  };
  f.gradient = [s] {
    Rng rng(s->seed);
    DropoutResult<double> d = dropout(s->input, s->rate, Mode::Train, rng);
    assign(s->grad_input, dropout_backward(s->weights, d.mask));
  };
  return f;
}

Differentiable softmax_fragment(const Tensor4<double>& logits, std::vector<int> labels) {
  struct State {
    Tensor4<double> logits, grad;
    std::vector<int> labels;
  };
  auto st = std::make_shared<State>(State{logits, Tensor4<double>(logits.shape()), std::move(labels)});
  Differentiable f;
  f.name = "softmax_cross_entropy";
  f.state = st;
  f.slots = {{"logits", st->logits.span(), st->grad.span()}};
  State* s = st.get();
  f.loss = [s] { return softmax_cross_entropy(s->logits, s->labels).loss; };
  f.gradient = [s] { assign(s->grad, softmax_cross_entropy(s->logits, s->labels).grad); };
  return f;
}

Differentiable backbone_fragment(const NetworkSpec& spec, const Tensor4<double>& input,
                                 std::vector<int> labels, std::uint64_t seed) {
  struct State {
    Network<double> net;
    Tensor4<double> input, grad_input;
    std::vector<int> labels;
    std::uint64_t seed;
  };
  Rng init_rng(seed);
  auto st = std::make_shared<State>(State{build_backbone<double>(spec, init_rng), input,
                                          Tensor4<double>(input.shape()), std::move(labels), seed});
  // Weights large enough that every layer carries signal into the loss.
  Rng wrng(seed ^ 0xABCDEFULL);
  for (Param<double>* p : st->net.parameters()) {
    for (auto& v : p->value.vec()) v += 0.3 * wrng.normal();
  }

  Differentiable f;
  f.name = "backbone(rm=" + std::to_string(spec.residual_modules) + ")";
  f.state = st;
  State* s = st.get();
  f.slots.push_back({"input", s->input.span(), s->grad_input.span()});
  for (Param<double>* p : s->net.parameters()) {
    f.slots.push_back({p->name, values(*p), grads(*p)});
  }
  f.loss = [s] {
    Rng mask_rng(s->seed + 1);
    const Tensor4<double> logits = s->net.forward(s->input, Mode::Train, mask_rng);
    return softmax_cross_entropy(logits, s->labels).loss;
  };
  f.gradient = [s] {
    Rng mask_rng(s->seed + 1);
    ForwardTape<double> tape;
    s->net.zero_grad();
    const Tensor4<double> logits = s->net.forward(s->input, Mode::Train, mask_rng, &tape);
    LossResult<double> l = softmax_cross_entropy(logits, s->labels);
    assign(s->grad_input, s->net.backward(tape, l.grad, true));
  };
  return f;
}

std::vector<GradCheckReport> run_oracle_suite(std::uint64_t seed, const GradCheckOptions& opt) {
  Rng rng(seed);
  std::vector<GradCheckReport> reports;
  for (std::size_t k : {1, 3, 5}) {
    ConvParams<double> p = make_conv<double>("conv", 3, 4, k);
    p.weight.value = random_tensor(p.weight.value.shape(), rng, 0.5);
    p.bias.value = random_tensor(p.bias.value.shape(), rng, 0.5);
    Differentiable f = conv_fragment(random_tensor({2, 3, 5, 5}, rng), std::move(p));
    reports.push_back(grad_check(f, opt));
  }
  {
    BatchNormParams<double> p = make_batchnorm<double>("bn", 2);
    p.scale.value = random_tensor(p.scale.value.shape(), rng);
    p.shift.value = random_tensor(p.shift.value.shape(), rng);
    const Shape4 s{4, 2, 3, 3};
    Differentiable f = batchnorm_fragment(random_tensor(s, rng), std::move(p), random_tensor(s, rng));
    reports.push_back(grad_check(f, opt));
  }
  {
    const Shape4 s{2, 3, 4, 4};
    Differentiable f = relu_fragment(random_tensor_away_from_zero(s, rng, 0.05), random_tensor(s, rng));
    reports.push_back(grad_check(f, opt));
  }
  {
    const Shape4 s{2, 3, 4, 4};
    Differentiable f = dropout_fragment(random_tensor(s, rng), 0.5, rng.next(), random_tensor(s, rng));
    reports.push_back(grad_check(f, opt));
  }
  {
    std::vector<int> labels(8);
    for (auto& l : labels) l = static_cast<int>(rng.below(5));
    Differentiable f = softmax_fragment(random_tensor({8, 5, 1, 1}, rng, 2.0), labels);
    reports.push_back(grad_check(f, opt));
  }
  {
    NetworkSpec spec;
    spec.bands = 3;
    spec.classes = 3;
    spec.patch = 5;
    spec.filters = 4;
    spec.residual_modules = 2;
    std::vector<int> labels = {static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};
    Differentiable f = backbone_fragment(spec, random_tensor({2, 3, 5, 5}, rng), labels, rng.next());
    reports.push_back(grad_check(f, opt));
  }
  return reports;
}

}  // namespace hsicnn
