#include "hsicnn/network.hpp"

#include <algorithm>
#include <string>

namespace hsicnn {

namespace {

constexpr double kFrontStd = 0.01;
constexpr double kMiddleStd = 0.005;
const char* const kBankNames[3] = {"C1x1", "C3x3", "C5x5"};
constexpr std::size_t kBankKernels[3] = {1, 3, 5};

template <typename T>
ConvBn<T> make_conv_bn(const std::string& name, std::size_t in_c, std::size_t out_c,
                       std::size_t kernel) {
  return ConvBn<T>{make_conv<T>(name + ".conv", in_c, out_c, kernel),
                   make_batchnorm<T>(name + ".bn", out_c)};
}

template <typename T>
void gaussian_fill(Tensor4<T>& t, double stddev, Rng& rng) {
  for (auto& v : t.vec()) v = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
void reset_bn(BatchNormParams<T>& bn) {
  bn.scale.value.fill(T{1});
  bn.shift.value.fill(T{0});
  bn.scale.velocity.fill(T{0});
  bn.shift.velocity.fill(T{0});
  std::fill(bn.running_mean.begin(), bn.running_mean.end(), T{0});
  std::fill(bn.running_var.begin(), bn.running_var.end(), T{1});
}

template <typename T>
void init_conv(ConvParams<T>& c, double stddev, Rng& rng) {
  gaussian_fill(c.weight.value, stddev, rng);
  c.bias.value.fill(T{0});
  c.weight.velocity.fill(T{0});
  c.bias.velocity.fill(T{0});
}

template <typename T>
void init_conv_bn(ConvBn<T>& l, double stddev, Rng& rng) {
  init_conv(l.conv, stddev, rng);
  reset_bn(l.bn);
}

template <typename T>
void push_conv_bn(std::vector<Param<T>*>& out, ConvBn<T>& l) {
  out.push_back(&l.conv.weight);
  out.push_back(&l.conv.bias);
  out.push_back(&l.bn.scale);
  out.push_back(&l.bn.shift);
}

template <typename T>
void mark_shared(ResidualModule<T>& m) {
  for (ConvBn<T>* l : {&m.first, &m.second}) {
    l->conv.weight.shared = l->conv.bias.shared = true;
    l->bn.scale.shared = l->bn.shift.shared = true;
  }
}

template <typename T>
Tensor4<T> conv_bn_relu(ConvBn<T>& l, const Tensor4<T>& in, Mode mode,
                        typename ForwardTape<T>::ConvBnTape* tape) {
  Tensor4<T> z = conv2d_forward(in, l.conv);
  Tensor4<T> nrm = batchnorm_forward(z, l.bn, mode, tape ? &tape->bn : nullptr);
  Tensor4<T> out = relu(nrm);
  if (tape) {
    tape->input = in;
    tape->pre_relu = std::move(nrm);
  }
  return out;
}

template <typename T>
Tensor4<T> conv_bn_relu_infer(const ConvBn<T>& l, const Tensor4<T>& in) {
  return relu(batchnorm_infer(conv2d_forward(in, l.conv), l.bn));
}

// Backward through relu(bn(conv(x))) given d/d output; accumulates grads.
template <typename T>
Tensor4<T> conv_bn_relu_backward(ConvBn<T>& l, const typename ForwardTape<T>::ConvBnTape& tape,
                                 const Tensor4<T>& grad_out, bool need_input_grad) {
  Tensor4<T> g = relu_backward(tape.pre_relu, grad_out);
  BatchNormGrads<T> bg = batchnorm_backward(g, l.bn, tape.bn);
  for (std::size_t i = 0; i < bg.scale.size(); ++i) {
    l.bn.scale.grad[i] += bg.scale[i];
    l.bn.shift.grad[i] += bg.shift[i];
  }
  ConvGrads<T> cg = conv2d_backward(tape.input, l.conv, bg.input, need_input_grad);
  for (std::size_t i = 0; i < cg.weight.size(); ++i) l.conv.weight.grad[i] += cg.weight[i];
  for (std::size_t i = 0; i < cg.bias.size(); ++i) l.conv.bias.grad[i] += cg.bias[i];
  return std::move(cg.input);
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T> (&parts)[3]) {
  const Shape4 s = parts[0].shape();
  Tensor4<T> out(s.n, 3 * s.c, s.h, s.w);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t c = 0; c < s.c; ++c) {
        auto src = parts[b].plane(n, c);
        std::copy(src.begin(), src.end(), out.plane(n, b * s.c + c).begin());
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> channel_slice(const Tensor4<T>& t, std::size_t begin, std::size_t count) {
  Tensor4<T> out(t.n(), count, t.h(), t.w());
  for (std::size_t n = 0; n < t.n(); ++n) {
    for (std::size_t c = 0; c < count; ++c) {
      auto src = t.plane(n, begin + c);
      std::copy(src.begin(), src.end(), out.plane(n, c).begin());
    }
  }
  return out;
}

template <typename T>
Tensor4<T> center_pixel(const Tensor4<T>& t) {
  Tensor4<T> out(t.n(), t.c(), 1, 1);
  const std::size_t cy = t.h() / 2, cx = t.w() / 2;
  for (std::size_t n = 0; n < t.n(); ++n)
    for (std::size_t c = 0; c < t.c(); ++c) out(n, c, 0, 0) = t(n, c, cy, cx);
  return out;
}

template <typename T>
void add_inplace(Tensor4<T>& a, const Tensor4<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
void copy_values(Param<T>& dst, const Param<T>& src) {
  dst.value = src.value;
  dst.velocity.fill(T{0});
  dst.grad.fill(T{0});
}

template <typename T>
void init_residual(ResidualModule<T>& m, Rng& rng) {
  init_conv_bn(m.first, kMiddleStd, rng);
  init_conv_bn(m.second, kMiddleStd, rng);
}

// Draw order is fixed: bank, C2, residual modules, C7, C8, C9.
template <typename T>
void init_layers(Network<T>& net, Rng& rng, bool include_residual) {
  for (std::size_t b = 0; b < 3; ++b) init_conv_bn(net.bank(b), kFrontStd, rng);
  init_conv_bn(net.c2(), kFrontStd, rng);
  if (include_residual) {
    for (std::size_t k = 0; k < net.residual_count(); ++k) init_residual(net.residual(k), rng);
  }
  init_conv_bn(net.c7(), kMiddleStd, rng);
  init_conv_bn(net.c8(), kMiddleStd, rng);
  init_conv(net.c9(), kFrontStd, rng);
  net.zero_grad();
}

}  // namespace

void NetworkSpec::validate() const {
  if (bands == 0) throw SpecError("network spec: bands must be positive");
  if (classes < 1) throw SpecError("network spec: classes must be positive");
  if (patch == 0 || patch % 2 == 0) {
    throw SpecError("network spec: patch must be odd and >= 1, got " + std::to_string(patch));
  }
  if (filters == 0) throw SpecError("network spec: filters must be positive");
  if (residual_modules < 2) {
    throw SpecError("network spec: residual_modules must be >= 2, got " +
                    std::to_string(residual_modules));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw SpecError("network spec: dropout_rate must be in [0, 1)");
  }
}

void CrossDomainSpec::validate() const {
  if (branches.empty()) throw SpecError("cross-domain spec: no branches");
  for (const auto& b : branches) b.validate();
  const NetworkSpec& first = branches.front();
  for (std::size_t i = 1; i < branches.size(); ++i) {
    const NetworkSpec& b = branches[i];
    if (b.filters != first.filters || b.patch != first.patch ||
        b.residual_modules != first.residual_modules) {
      throw SpecError("cross-domain spec: branch " + std::to_string(i) +
                      " disagrees with branch 0 on filters/patch/residual_modules (" +
                      std::to_string(b.filters) + "/" + std::to_string(b.patch) + "/" +
                      std::to_string(b.residual_modules) + " vs " + std::to_string(first.filters) +
                      "/" + std::to_string(first.patch) + "/" +
                      std::to_string(first.residual_modules) + ")");
    }
  }
}

template <typename T>
std::shared_ptr<ResidualModule<T>> make_residual_module(std::size_t index, std::size_t filters) {
  const std::string base = "res" + std::to_string(index + 1);
  auto m = std::make_shared<ResidualModule<T>>();
  m->first = make_conv_bn<T>(base + ".1", filters, filters, 1);
  m->second = make_conv_bn<T>(base + ".2", filters, filters, 1);
  mark_shared(*m);
  return m;
}

template <typename T>
Network<T>::Network(const NetworkSpec& spec,
                    std::vector<std::shared_ptr<ResidualModule<T>>> residual)
    : spec_(spec), residual_(std::move(residual)) {
  spec_.validate();
  if (residual_.size() != spec_.residual_modules) {
    throw SpecError("network: " + std::to_string(residual_.size()) +
                    " residual modules supplied, spec asks for " +
                    std::to_string(spec_.residual_modules));
  }
  const std::size_t F = spec_.filters;
  for (std::size_t b = 0; b < 3; ++b) {
    bank_[b] = make_conv_bn<T>(kBankNames[b], spec_.bands, F, kBankKernels[b]);
  }
  c2_ = make_conv_bn<T>("C2", 3 * F, F, 1);
  c7_ = make_conv_bn<T>("C7", F, F, 1);
  c8_ = make_conv_bn<T>("C8", F, F, 1);
  c9_ = make_conv<T>("C9", F, spec_.classes, 1);
}

template <typename T>
void Network<T>::check_input(const Tensor4<T>& batch) const {
  if (batch.c() != spec_.bands) {
    throw DimensionError("network: expected " + std::to_string(spec_.bands) +
                         " input bands, got " + std::to_string(batch.c()) + " (batch shape " +
                         batch.shape().str() + ")");
  }
  if (batch.h() != spec_.patch || batch.w() != spec_.patch) {
    throw DimensionError("network: expected " + std::to_string(spec_.patch) + "x" +
                         std::to_string(spec_.patch) + " patches, got batch shape " +
                         batch.shape().str());
  }
}

template <typename T>
Tensor4<T> Network<T>::forward(const Tensor4<T>& batch, Mode mode, Rng& rng, ForwardTape<T>* tape) {
  check_input(batch);
  if (tape) tape->residual.assign(residual_.size(), {});
  Tensor4<T> bank_out[3];
  for (std::size_t b = 0; b < 3; ++b) {
    bank_out[b] = conv_bn_relu(bank_[b], batch, mode, tape ? &tape->bank[b] : nullptr);
  }
  Tensor4<T> x = conv_bn_relu(c2_, concat_channels(bank_out), mode, tape ? &tape->c2 : nullptr);

  for (std::size_t k = 0; k < residual_.size(); ++k) {
    ResidualModule<T>& m = *residual_[k];
    auto* rt = tape ? &tape->residual[k] : nullptr;
    Tensor4<T> a = conv_bn_relu(m.first, x, mode, rt ? &rt->first : nullptr);
    Tensor4<T> z = conv2d_forward(a, m.second.conv);
    Tensor4<T> s = batchnorm_forward(z, m.second.bn, mode, rt ? &rt->second_bn : nullptr);
    add_inplace(s, x);
    if (rt) rt->second_input = std::move(a);
    x = relu(s);
    if (rt) rt->sum = std::move(s);
  }

  x = conv_bn_relu(c7_, x, mode, tape ? &tape->c7 : nullptr);
  DropoutResult<T> d7 = dropout(x, spec_.dropout_rate, mode, rng);
  x = conv_bn_relu(c8_, d7.output, mode, tape ? &tape->c8 : nullptr);
  DropoutResult<T> d8 = dropout(x, spec_.dropout_rate, mode, rng);
  Tensor4<T> out = conv2d_forward(d8.output, c9_);
  if (tape) {
    tape->c7_mask = std::move(d7.mask);
    tape->c8_mask = std::move(d8.mask);
    tape->c9_input = std::move(d8.output);
    tape->c9_output = out.shape();
  }
  return center_pixel(out);
}

template <typename T>
Tensor4<T> Network<T>::predict(const Tensor4<T>& batch) const {
  check_input(batch);
  Tensor4<T> bank_out[3];
  for (std::size_t b = 0; b < 3; ++b) bank_out[b] = conv_bn_relu_infer(bank_[b], batch);
  Tensor4<T> x = conv_bn_relu_infer(c2_, concat_channels(bank_out));
  for (const auto& mp : residual_) {
    Tensor4<T> s = batchnorm_infer(conv2d_forward(conv_bn_relu_infer(mp->first, x), mp->second.conv),
                                   mp->second.bn);
    add_inplace(s, x);
    x = relu(s);
  }
  x = conv_bn_relu_infer(c7_, x);
  x = conv_bn_relu_infer(c8_, x);
  return center_pixel(conv2d_forward(x, c9_));
}

template <typename T>
Tensor4<T> Network<T>::backward(const ForwardTape<T>& tape, const Tensor4<T>& grad_logits,
                                bool need_input_grad) {
  const Shape4 os = tape.c9_output;
  require_same_shape(Shape4{os.n, os.c, 1, 1}, grad_logits.shape(), "network backward grad_logits");
  Tensor4<T> g9(os);
  for (std::size_t n = 0; n < os.n; ++n)
    for (std::size_t c = 0; c < os.c; ++c) g9(n, c, os.h / 2, os.w / 2) = grad_logits(n, c, 0, 0);

  ConvGrads<T> cg = conv2d_backward(tape.c9_input, c9_, g9, true);
  for (std::size_t i = 0; i < cg.weight.size(); ++i) c9_.weight.grad[i] += cg.weight[i];
  for (std::size_t i = 0; i < cg.bias.size(); ++i) c9_.bias.grad[i] += cg.bias[i];

  Tensor4<T> g = dropout_backward(cg.input, tape.c8_mask);
  g = conv_bn_relu_backward(c8_, tape.c8, g, true);
  g = dropout_backward(g, tape.c7_mask);
  g = conv_bn_relu_backward(c7_, tape.c7, g, true);

  for (std::size_t k = residual_.size(); k-- > 0;) {
    ResidualModule<T>& m = *residual_[k];
    const auto& rt = tape.residual[k];
    Tensor4<T> gs = relu_backward(rt.sum, g);
    BatchNormGrads<T> bg = batchnorm_backward(gs, m.second.bn, rt.second_bn);
    for (std::size_t i = 0; i < bg.scale.size(); ++i) {
      m.second.bn.scale.grad[i] += bg.scale[i];
      m.second.bn.shift.grad[i] += bg.shift[i];
    }
    ConvGrads<T> c2g = conv2d_backward(rt.second_input, m.second.conv, bg.input, true);
    for (std::size_t i = 0; i < c2g.weight.size(); ++i) m.second.conv.weight.grad[i] += c2g.weight[i];
    for (std::size_t i = 0; i < c2g.bias.size(); ++i) m.second.conv.bias.grad[i] += c2g.bias[i];
    g = conv_bn_relu_backward(m.first, rt.first, c2g.input, true);
    add_inplace(g, gs);
  }

  g = conv_bn_relu_backward(c2_, tape.c2, g, true);
  const std::size_t F = spec_.filters;
  Tensor4<T> grad_input;
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor4<T> gi = conv_bn_relu_backward(bank_[b], tape.bank[b], channel_slice(g, b * F, F),
                                          need_input_grad);
    if (need_input_grad) {
      if (b == 0) {
        grad_input = std::move(gi);
      } else {
        add_inplace(grad_input, gi);
      }
    }
  }
  return grad_input;
}

template <typename T>
void Network<T>::zero_grad() {
  for (Param<T>* p : parameters()) p->zero_grad();
}

template <typename T>
std::vector<Param<T>*> Network<T>::parameters() {
  std::vector<Param<T>*> out;
  for (auto& b : bank_) push_conv_bn(out, b);
  push_conv_bn(out, c2_);
  for (auto& m : residual_) {
    push_conv_bn(out, m->first);
    push_conv_bn(out, m->second);
  }
  push_conv_bn(out, c7_);
  push_conv_bn(out, c8_);
  out.push_back(&c9_.weight);
  out.push_back(&c9_.bias);
  return out;
}

template <typename T>
std::vector<const Param<T>*> Network<T>::parameters() const {
  auto mut = const_cast<Network<T>*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<BatchNormParams<T>*> Network<T>::batchnorms() {
  std::vector<BatchNormParams<T>*> out;
  for (auto& b : bank_) out.push_back(&b.bn);
  out.push_back(&c2_.bn);
  for (auto& m : residual_) {
    out.push_back(&m->first.bn);
    out.push_back(&m->second.bn);
  }
  out.push_back(&c7_.bn);
  out.push_back(&c8_.bn);
  return out;
}

template <typename T>
std::vector<const BatchNormParams<T>*> Network<T>::batchnorms() const {
  auto mut = const_cast<Network<T>*>(this)->batchnorms();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<LayerTag> Network<T>::layer_tags() const {
  std::vector<LayerTag> tags;
  for (const char* name : kBankNames) tags.push_back({name, false});
  tags.push_back({"C2", false});
  for (std::size_t k = 0; k < residual_.size(); ++k) {
    for (int j = 1; j <= 2; ++j) {
      tags.push_back({"ResModule[" + std::to_string(k + 1) + "].Conv[" + std::to_string(j) + "]", true});
    }
  }
  for (const char* name : {"C7", "C8", "C9"}) tags.push_back({name, false});
  return tags;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t total = 0;
  for (const Param<T>* p : parameters()) total += p->size();
  return total;
}

template <typename T>
Network<T> Network<T>::clone() const {
  std::vector<std::shared_ptr<ResidualModule<T>>> res;
  for (const auto& m : residual_) res.push_back(std::make_shared<ResidualModule<T>>(*m));
  Network<T> copy(spec_, std::move(res));
  for (std::size_t b = 0; b < 3; ++b) copy.bank_[b] = bank_[b];
  copy.c2_ = c2_;
  copy.c7_ = c7_;
  copy.c8_ = c8_;
  copy.c9_ = c9_;
  return copy;
}

template <typename T>
Network<T> build_backbone(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<std::shared_ptr<ResidualModule<T>>> res;
  for (std::size_t k = 0; k < spec.residual_modules; ++k) {
    res.push_back(make_residual_module<T>(k, spec.filters));
  }
  Network<T> net(spec, std::move(res));
  init_weights(net, rng);
  return net;
}

template <typename T>
void init_weights(Network<T>& net, Rng& rng) {
  init_layers(net, rng, true);
}

template <typename T>
CrossDomainNetwork<T>::CrossDomainNetwork(CrossDomainSpec spec,
                                          std::vector<std::shared_ptr<ResidualModule<T>>> shared,
                                          std::vector<Network<T>> branches)
    : spec_(std::move(spec)), shared_(std::move(shared)), branches_(std::move(branches)) {
  spec_.validate();
  if (branches_.size() != spec_.branches.size()) {
    throw SpecError("cross-domain network: branch count does not match spec");
  }
  for (const auto& b : branches_) {
    for (std::size_t k = 0; k < shared_.size(); ++k) {
      if (b.residual_ptr(k) != shared_[k]) {
        throw SpecError("cross-domain network: branch does not reference the shared store");
      }
    }
  }
}

template <typename T>
std::vector<Param<T>*> CrossDomainNetwork<T>::physical_parameters() {
  std::vector<Param<T>*> out;
  for (auto& b : branches_) {
    for (Param<T>* p : b.parameters()) {
      if (!p->shared) out.push_back(p);
    }
  }
  for (Param<T>* p : shared_parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<Param<T>*> CrossDomainNetwork<T>::shared_parameters() {
  std::vector<Param<T>*> out;
  for (auto& m : shared_) push_conv_bn(out, m->first), push_conv_bn(out, m->second);
  return out;
}

template <typename T>
std::size_t CrossDomainNetwork<T>::physical_parameter_count() const {
  std::size_t total = 0;
  for (const Param<T>* p : const_cast<CrossDomainNetwork<T>*>(this)->physical_parameters()) {
    total += p->size();
  }
  return total;
}

template <typename T>
CrossDomainNetwork<T> build_cross_domain(const CrossDomainSpec& spec, Rng& rng) {
  spec.validate();
  const NetworkSpec& first = spec.branches.front();
  std::vector<std::shared_ptr<ResidualModule<T>>> shared;
  for (std::size_t k = 0; k < first.residual_modules; ++k) {
    shared.push_back(make_residual_module<T>(k, first.filters));
  }
  for (auto& m : shared) init_residual(*m, rng);
  std::vector<Network<T>> branches;
  for (const NetworkSpec& bs : spec.branches) {
    Network<T> net(bs, shared);
    init_layers(net, rng, false);
    branches.push_back(std::move(net));
  }
  return CrossDomainNetwork<T>(spec, std::move(shared), std::move(branches));
}

template <typename T>
Network<T> transfer_shared(const CrossDomainNetwork<T>& pretrained, const NetworkSpec& target,
                           Rng& rng) {
  target.validate();
  const NetworkSpec& src = pretrained.spec().branches.front();
  if (target.residual_modules != pretrained.residual_count()) {
    throw TransferError("transfer: target has " + std::to_string(target.residual_modules) +
                        " residual modules, pre-trained network has " +
                        std::to_string(pretrained.residual_count()));
  }
  if (target.filters != src.filters) {
    throw TransferError("transfer: target has " + std::to_string(target.filters) +
                        " filters, pre-trained network has " + std::to_string(src.filters));
  }
  Network<T> net = build_backbone<T>(target, rng);
  for (std::size_t k = 0; k < pretrained.residual_count(); ++k) {
    const ResidualModule<T>& from = pretrained.shared_module(k);
    ResidualModule<T>& to = net.residual(k);
    for (auto [d, s] : {std::pair{&to.first, &from.first}, std::pair{&to.second, &from.second}}) {
      copy_values(d->conv.weight, s->conv.weight);
      copy_values(d->conv.bias, s->conv.bias);
      copy_values(d->bn.scale, s->bn.scale);
      copy_values(d->bn.shift, s->bn.shift);
    }
  }
  return net;
}

#define HSICNN_INSTANTIATE_NETWORK(T)                                                            \
  template class Network<T>;                                                                     \
  template class CrossDomainNetwork<T>;                                                          \
  template std::shared_ptr<ResidualModule<T>> make_residual_module<T>(std::size_t, std::size_t); \
  template Network<T> build_backbone<T>(const NetworkSpec&, Rng&);                               \
  template void init_weights<T>(Network<T>&, Rng&);                                              \
  template CrossDomainNetwork<T> build_cross_domain<T>(const CrossDomainSpec&, Rng&);            \
  template Network<T> transfer_shared<T>(const CrossDomainNetwork<T>&, const NetworkSpec&, Rng&);

HSICNN_INSTANTIATE_NETWORK(float)
HSICNN_INSTANTIATE_NETWORK(double)

#undef HSICNN_INSTANTIATE_NETWORK

}  // namespace hsicnn
