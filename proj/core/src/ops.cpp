#include "hsicnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hsicnn {

namespace {

// Convolutions run over chunks of whole samples. Column buffers use
// r = (i*k + dy)*k + dx for the tap and j = (n - n0)*h*w + y*w + x for the
// output position; out-of-image taps read as zero.

// (R x J) layout: one row per tap.
// Valid output range [lo, hi) along one axis for tap offset d.
inline void tap_range(std::size_t d, std::size_t pad, std::size_t extent, std::size_t& lo,
                      std::size_t& hi) {
  lo = d < pad ? pad - d : 0;
  const std::size_t shift = d > pad ? d - pad : 0;
  hi = extent > shift ? extent - shift : 0;
  if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const Tensor4<T>& in, std::size_t n0, std::size_t n1, std::size_t k, std::size_t pad,
            std::vector<T>& col) {
  const std::size_t C = in.c(), H = in.h(), W = in.w();
  const std::size_t P = H * W, J = (n1 - n0) * P;
  col.assign(C * k * k * J, T{0});
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      std::size_t ylo, yhi;
      tap_range(dy, pad, H, ylo, yhi);
      for (std::size_t dx = 0; dx < k; ++dx) {
        std::size_t xlo, xhi;
        tap_range(dx, pad, W, xlo, xhi);
        T* row = col.data() + ((i * k + dy) * k + dx) * J;
        for (std::size_t n = n0; n < n1; ++n) {
          const T* src = in.data() + in.index(n, i, 0, 0);
          T* dst = row + (n - n0) * P;
          for (std::size_t y = ylo; y < yhi; ++y) {
            const T* s = src + (y + dy - pad) * W + (xlo + dx - pad);
            std::copy(s, s + (xhi - xlo), dst + y * W + xlo);
          }
        }
      }
    }
  }
}

// (J x R) layout: one row per output position.
template <typename T>
void im2row(const Tensor4<T>& in, std::size_t n0, std::size_t n1, std::size_t k, std::size_t pad,
            std::vector<T>& rows) {
  const std::size_t C = in.c(), H = in.h(), W = in.w();
  const std::size_t R = C * k * k;
  rows.assign((n1 - n0) * H * W * R, T{0});
  for (std::size_t n = n0; n < n1; ++n) {
    for (std::size_t y = 0; y < H; ++y) {
      // Taps dy in [dylo, dyhi) land inside the image for this row.
      const std::size_t dylo = y < pad ? pad - y : 0;
      const std::size_t dyhi = std::min(k, H + pad - y);
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t dxlo = x < pad ? pad - x : 0;
        const std::size_t dxhi = std::min(k, W + pad - x);
        T* dst = rows.data() + (((n - n0) * H + y) * W + x) * R;
        for (std::size_t i = 0; i < C; ++i) {
          const T* src = in.data() + in.index(n, i, 0, 0);
          for (std::size_t dy = dylo; dy < dyhi; ++dy) {
            const T* s = src + (y + dy - pad) * W + (x + dxlo - pad);
            std::copy(s, s + (dxhi - dxlo), dst + (i * k + dy) * k + dxlo);
          }
        }
      }
    }
  }
}

// Samples [n0, n1) of t as a (C x (n1-n0)*h*w) matrix.
template <typename T>
void gather_channel_major(const Tensor4<T>& t, std::size_t n0, std::size_t n1, std::vector<T>& out) {
  const std::size_t C = t.c(), P = t.h() * t.w(), J = (n1 - n0) * P;
  out.resize(C * J);
  for (std::size_t n = n0; n < n1; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(t.data() + t.index(n, c, 0, 0), P, out.data() + c * J + (n - n0) * P);
    }
  }
}

// C[i][j] += sum_k A[i][k] * B[j][k]  (C += A * B^T), rows contiguous in k.
// Four rows of A share each pass over a row of B; eight partial sums per row
// keep the loop vectorizable.
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    const T* a = A + i * lda;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * ldb;
      T p0[8] = {}, p1[8] = {}, p2[8] = {}, p3[8] = {};
      std::size_t q = 0;
      for (; q + 8 <= K; q += 8) {
        for (int l = 0; l < 8; ++l) {
          const T bv = b[q + l];
          p0[l] += a[q + l] * bv;
          p1[l] += a[lda + q + l] * bv;
          p2[l] += a[2 * lda + q + l] * bv;
          p3[l] += a[3 * lda + q + l] * bv;
        }
      }
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      for (int l = 0; l < 8; ++l) {
        s0 += p0[l];
        s1 += p1[l];
        s2 += p2[l];
        s3 += p3[l];
      }
      for (; q < K; ++q) {
        const T bv = b[q];
        s0 += a[q] * bv;
        s1 += a[lda + q] * bv;
        s2 += a[2 * lda + q] * bv;
        s3 += a[3 * lda + q] * bv;
      }
      C[i * ldc + j] += s0;
      C[(i + 1) * ldc + j] += s1;
      C[(i + 2) * ldc + j] += s2;
      C[(i + 3) * ldc + j] += s3;
    }
  }
  for (; i < M; ++i) {
    const T* a = A + i * lda;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * ldb;
      T p[8] = {};
      std::size_t q = 0;
      for (; q + 8 <= K; q += 8) {
        for (int l = 0; l < 8; ++l) p[l] += a[q + l] * b[q + l];
      }
      T s = 0;
      for (int l = 0; l < 8; ++l) s += p[l];
      for (; q < K; ++q) s += a[q] * b[q];
      C[i * ldc + j] += s;
    }
  }
}

// Samples per chunk: column buffers stay within a few hundred KB and the
// single-precision partial sums of the weight gradient span at most 512
// positions before they are folded into double.
std::size_t chunk_samples(std::size_t rows, std::size_t plane) {
  constexpr std::size_t kBudget = std::size_t{1} << 17;
  constexpr std::size_t kMaxColumns = 512;
  std::size_t s = std::max<std::size_t>(1, kBudget / std::max<std::size_t>(1, rows * plane));
  s = std::min(s, std::max<std::size_t>(1, kMaxColumns / std::max<std::size_t>(1, plane)));
  return s;
}

void check_conv_input(const Shape4& in, std::size_t in_c, const Shape4& weights) {
  if (in.c != in_c) {
    throw DimensionError("conv2d: input shape " + in.str() + " incompatible with weights " +
                         weights.str());
  }
}

// Same-padded stride-1 cross-correlation of `input` with an (out_c, c, k, k)
// kernel; `bias` may be null.
template <typename T>
Tensor4<T> correlate(const Tensor4<T>& input, const T* weight, std::size_t out_c, std::size_t k,
                     const T* bias) {
  const std::size_t O = out_c;
  const std::size_t R = input.c() * k * k;
  const std::size_t N = input.n(), P = input.h() * input.w();
  Tensor4<T> out(Shape4{N, O, input.h(), input.w()});
  if (bias) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < O; ++o) std::fill_n(out.data() + out.index(n, o, 0, 0), P, bias[o]);
    }
  }
  const std::size_t step = chunk_samples(R, P);
  std::vector<T> rows;
  for (std::size_t n0 = 0; n0 < N; n0 += step) {
    const std::size_t n1 = std::min(N, n0 + step);
    im2row(input, n0, n1, k, (k - 1) / 2, rows);
    for (std::size_t n = n0; n < n1; ++n) {
      gemm_nt(O, P, R, weight, R, rows.data() + (n - n0) * P * R, R, out.data() + out.index(n, 0, 0, 0), P);
    }
  }
  return out;
}

}  // namespace

template <typename T>
ConvParams<T> make_conv(const std::string& name, std::size_t in_c, std::size_t out_c,
                        std::size_t kernel) {
  if (kernel != 1 && kernel != 3 && kernel != 5) {
    throw ConfigError("conv " + name + ": kernel must be 1, 3 or 5, got " + std::to_string(kernel));
  }
  if (in_c == 0 || out_c == 0) throw ConfigError("conv " + name + ": zero channel count");
  ConvParams<T> p;
  p.weight = Param<T>(name + ".weight", Shape4{out_c, in_c, kernel, kernel}, true);
  p.bias = Param<T>(name + ".bias", Shape4{1, out_c, 1, 1}, false);
  return p;
}

template <typename T>
BatchNormParams<T> make_batchnorm(const std::string& name, std::size_t channels) {
  BatchNormParams<T> p;
  p.scale = Param<T>(name + ".scale", Shape4{1, channels, 1, 1}, true);
  p.shift = Param<T>(name + ".shift", Shape4{1, channels, 1, 1}, true);
  p.scale.value.fill(T{1});
  p.running_mean.assign(channels, T{0});
  p.running_var.assign(channels, T{1});
  return p;
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvParams<T>& p) {
  check_conv_input(input.shape(), p.in_channels(), p.weight.value.shape());
  return correlate(input, p.weight.value.data(), p.out_channels(), p.kernel(), p.bias.value.data());
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const ConvParams<T>& p,
                             const Tensor4<T>& grad_out, bool need_input_grad) {
  check_conv_input(input.shape(), p.in_channels(), p.weight.value.shape());
  const std::size_t k = p.kernel();
  const std::size_t O = p.out_channels();
  const std::size_t R = p.in_channels() * k * k;
  const std::size_t N = input.n(), P = input.h() * input.w();
  require_same_shape(Shape4{N, O, input.h(), input.w()}, grad_out.shape(), "conv2d_backward grad_out");

  ConvGrads<T> g;
  g.bias = Tensor4<T>(p.bias.value.shape());
  g.weight = Tensor4<T>(p.weight.value.shape());
  for (std::size_t o = 0; o < O; ++o) {
    Accum s = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* go = grad_out.data() + grad_out.index(n, o, 0, 0);
      for (std::size_t j = 0; j < P; ++j) s += go[j];
    }
    g.bias[o] = static_cast<T>(s);
  }
  // dW = gout * col^T per chunk; chunk partials are summed in double.
  std::vector<Accum> acc(O * R, 0.0);
  std::vector<T> part(O * R), col, gout;
  const std::size_t step = chunk_samples(R, P);
  for (std::size_t n0 = 0; n0 < N; n0 += step) {
    const std::size_t n1 = std::min(N, n0 + step);
    const std::size_t J = (n1 - n0) * P;
    im2col(input, n0, n1, k, p.pad(), col);
    gather_channel_major(grad_out, n0, n1, gout);
    std::fill(part.begin(), part.end(), T{0});
    gemm_nt(O, R, J, gout.data(), J, col.data(), J, part.data(), R);
    for (std::size_t i = 0; i < O * R; ++i) acc[i] += part[i];
  }
  for (std::size_t i = 0; i < O * R; ++i) g.weight[i] = static_cast<T>(acc[i]);

  // The input gradient correlates grad_out with the spatially flipped,
  // channel-transposed kernel.
  if (need_input_grad) {
    const std::size_t C = p.in_channels();
    std::vector<T> flipped(C * O * k * k);
    const T* w = p.weight.value.data();
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < k * k; ++t) {
          flipped[(c * O + o) * k * k + (k * k - 1 - t)] = w[(o * C + c) * k * k + t];
        }
      }
    }
    g.input = correlate(grad_out, flipped.data(), C, k, static_cast<const T*>(nullptr));
  }
  return g;
}

template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& input, BatchNormParams<T>& p, Mode mode,
                             BatchNormCache<T>* cache) {
  if (mode == Mode::Eval) return batchnorm_infer(input, p);
  const std::size_t C = input.c();
  if (C != p.channels()) {
    throw DimensionError("batchnorm: input shape " + input.shape().str() + " has " +
                         std::to_string(C) + " channels, parameters have " +
                         std::to_string(p.channels()));
  }
  const std::size_t N = input.n(), P = input.h() * input.w();
  const std::size_t M = N * P;
  if (M <= 1) {
    throw DataError("batchnorm: degenerate batch statistics, n*h*w = " + std::to_string(M));
  }
  Tensor4<T> out(input.shape());
  Tensor4<T> normalized(input.shape());
  std::vector<Accum> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    Accum sum = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (T v : input.plane(n, c)) sum += v;
    const Accum mean = sum / static_cast<Accum>(M);
    Accum sq = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (T v : input.plane(n, c)) sq += (v - mean) * (v - mean);
    const Accum var = sq / static_cast<Accum>(M);
    const Accum is = 1.0 / std::sqrt(var + static_cast<Accum>(p.epsilon));
    inv_std[c] = is;
    const Accum scale = p.scale.value[c], shift = p.shift.value[c];
    for (std::size_t n = 0; n < N; ++n) {
      auto src = input.plane(n, c);
      auto xh = normalized.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        const Accum z = (src[i] - mean) * is;
        xh[i] = static_cast<T>(z);
        dst[i] = static_cast<T>(scale * z + shift);
      }
    }
    // Running variance tracks the unbiased estimate.
    const Accum m = p.momentum;
    const Accum unbiased = var * static_cast<Accum>(M) / static_cast<Accum>(M - 1);
    p.running_mean[c] = static_cast<T>((1 - m) * p.running_mean[c] + m * mean);
    p.running_var[c] = static_cast<T>((1 - m) * p.running_var[c] + m * unbiased);
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
Tensor4<T> batchnorm_infer(const Tensor4<T>& input, const BatchNormParams<T>& p) {
  const std::size_t C = input.c();
  if (C != p.channels()) {
    throw DimensionError("batchnorm: input shape " + input.shape().str() + " has " +
                         std::to_string(C) + " channels, parameters have " +
                         std::to_string(p.channels()));
  }
  Tensor4<T> out(input.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const Accum is = 1.0 / std::sqrt(static_cast<Accum>(p.running_var[c]) + p.epsilon);
    const Accum a = p.scale.value[c] * is;
    const Accum b = p.shift.value[c] - a * p.running_mean[c];
    for (std::size_t n = 0; n < input.n(); ++n) {
      auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(a * src[i] + b);
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor4<T>& grad_out, const BatchNormParams<T>& p,
                                     const BatchNormCache<T>& cache) {
  require_same_shape(cache.normalized.shape(), grad_out.shape(), "batchnorm_backward grad_out");
  const std::size_t N = grad_out.n(), C = grad_out.c(), P = grad_out.h() * grad_out.w();
  const Accum M = static_cast<Accum>(N * P);
  BatchNormGrads<T> g;
  g.input = Tensor4<T>(grad_out.shape());
  g.scale = Tensor4<T>(p.scale.value.shape());
  g.shift = Tensor4<T>(p.shift.value.shape());
  for (std::size_t c = 0; c < C; ++c) {
    Accum sum_g = 0, sum_gx = 0;
    for (std::size_t n = 0; n < N; ++n) {
      auto go = grad_out.plane(n, c);
      auto xh = cache.normalized.plane(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        sum_g += go[i];
        sum_gx += static_cast<Accum>(go[i]) * xh[i];
      }
    }
    g.scale[c] = static_cast<T>(sum_gx);
    g.shift[c] = static_cast<T>(sum_g);
    const Accum k = p.scale.value[c] * cache.inv_std[c] / M;
    for (std::size_t n = 0; n < N; ++n) {
      auto go = grad_out.plane(n, c);
      auto xh = cache.normalized.plane(n, c);
      auto gi = g.input.plane(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        gi[i] = static_cast<T>(k * (M * go[i] - sum_g - xh[i] * sum_gx));
      }
    }
  }
  return g;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& input) {
  Tensor4<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
  return out;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out) {
  require_same_shape(input.shape(), grad_out.shape(), "relu_backward grad_out");
  Tensor4<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <typename T>
DropoutResult<T> dropout(const Tensor4<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  DropoutResult<T> r;
  if (mode == Mode::Eval || rate == 0.0) {
    r.output = input;
    if (mode == Mode::Train) r.mask = Tensor4<T>(input.shape(), T{1});
    return r;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  r.mask = Tensor4<T>(input.shape());
  r.output = Tensor4<T>(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T m = rng.uniform() < rate ? T{0} : keep_scale;
    r.mask[i] = m;
    r.output[i] = input[i] * m;
  }
  return r;
}

template <typename T>
Tensor4<T> dropout_backward(const Tensor4<T>& grad_out, const Tensor4<T>& mask) {
  require_same_shape(mask.shape(), grad_out.shape(), "dropout_backward grad_out");
  Tensor4<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, std::span<const int> labels) {
  const std::size_t N = logits.n(), K = logits.c();
  if (logits.h() != 1 || logits.w() != 1) {
    throw DimensionError("softmax_cross_entropy: logits must be (n, classes, 1, 1), got " +
                         logits.shape().str());
  }
  if (labels.size() != N) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(N));
  }
  LossResult<T> r;
  r.grad = Tensor4<T>(logits.shape());
  std::vector<Accum> prob(K);
  Accum total = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= K) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(label) + " at batch index " +
                      std::to_string(n) + " outside [0, " + std::to_string(K) + ")");
    }
    Accum mx = logits(n, 0, 0, 0);
    for (std::size_t k = 1; k < K; ++k) mx = std::max<Accum>(mx, logits(n, k, 0, 0));
    Accum z = 0;
    for (std::size_t k = 0; k < K; ++k) {
      prob[k] = std::exp(static_cast<Accum>(logits(n, k, 0, 0)) - mx);
      z += prob[k];
    }
    total += std::log(z) - (static_cast<Accum>(logits(n, label, 0, 0)) - mx);
    for (std::size_t k = 0; k < K; ++k) {
      const Accum onehot = static_cast<std::size_t>(label) == k ? 1.0 : 0.0;
      r.grad(n, k, 0, 0) = static_cast<T>((prob[k] / z - onehot) / static_cast<Accum>(N));
    }
  }
  r.loss = total / static_cast<Accum>(N);
  return r;
}

template <typename T>
void sgd_step(Param<T>& p, const SgdConfig& cfg, std::int64_t iteration) {
  if (!p.grad.all_finite()) {
    throw NumericError("non-finite gradient in parameter '" + p.name + "' at iteration " +
                       std::to_string(iteration));
  }
  const double wd = p.decay ? cfg.weight_decay : 0.0;
  T* w = p.value.data();
  T* v = p.velocity.data();
  const T* g = p.grad.data();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double step = cfg.momentum * v[i] - cfg.lr * (g[i] + wd * w[i]);
    v[i] = static_cast<T>(step);
    w[i] += v[i];
  }
}

#define HSICNN_INSTANTIATE_OPS(T)                                                                 \
  template ConvParams<T> make_conv<T>(const std::string&, std::size_t, std::size_t, std::size_t); \
  template BatchNormParams<T> make_batchnorm<T>(const std::string&, std::size_t);                 \
  template Tensor4<T> conv2d_forward<T>(const Tensor4<T>&, const ConvParams<T>&);                 \
  template ConvGrads<T> conv2d_backward<T>(const Tensor4<T>&, const ConvParams<T>&,               \
                                           const Tensor4<T>&, bool);                              \
  template Tensor4<T> batchnorm_forward<T>(const Tensor4<T>&, BatchNormParams<T>&, Mode,          \
                                           BatchNormCache<T>*);                                   \
  template Tensor4<T> batchnorm_infer<T>(const Tensor4<T>&, const BatchNormParams<T>&);           \
  template BatchNormGrads<T> batchnorm_backward<T>(const Tensor4<T>&, const BatchNormParams<T>&,  \
                                                   const BatchNormCache<T>&);                     \
  template Tensor4<T> relu<T>(const Tensor4<T>&);                                                 \
  template Tensor4<T> relu_backward<T>(const Tensor4<T>&, const Tensor4<T>&);                     \
  template DropoutResult<T> dropout<T>(const Tensor4<T>&, double, Mode, Rng&);                    \
  template Tensor4<T> dropout_backward<T>(const Tensor4<T>&, const Tensor4<T>&);                  \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor4<T>&, std::span<const int>);       \
  template void sgd_step<T>(Param<T>&, const SgdConfig&, std::int64_t);

HSICNN_INSTANTIATE_OPS(float)
HSICNN_INSTANTIATE_OPS(double)

#undef HSICNN_INSTANTIATE_OPS

}  // namespace hsicnn
