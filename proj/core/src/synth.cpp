#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "hsicnn/data.hpp"

namespace hsicnn {

namespace {

constexpr int kBumpsPerClass = 4;

}  // namespace

void SynthConfig::validate() const {
  if (classes < 2) throw ConfigError("synth: classes must be >= 2");
  if (bands < 1) throw ConfigError("synth: bands must be >= 1");
  if (height * width < classes) throw ConfigError("synth: raster smaller than class count");
  if (!(noise_std >= 0)) throw ConfigError("synth: noise_std must be >= 0");
  if (!(blob_scale > 0)) throw ConfigError("synth: blob_scale must be positive");
}

std::vector<std::vector<double>> synth_signatures(const SynthConfig& cfg) {
  // Spectra are defined on a continuous wavelength axis t in [0, 1] and sampled
  // at band centers, so the same signature seed yields related spectra at any
  // band count.
  Rng rng(cfg.signature_seed);
  std::vector<std::vector<double>> sig(cfg.classes, std::vector<double>(cfg.bands));
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    const double base = 0.5 * rng.uniform();
    double mu[kBumpsPerClass], sigma[kBumpsPerClass], amp[kBumpsPerClass];
    for (int k = 0; k < kBumpsPerClass; ++k) {
      mu[k] = rng.uniform();
      sigma[k] = 0.05 + 0.15 * rng.uniform();
      amp[k] = 0.2 + 0.8 * rng.uniform();
    }
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      const double t = (static_cast<double>(b) + 0.5) / static_cast<double>(cfg.bands);
      double v = base;
      for (int k = 0; k < kBumpsPerClass; ++k) {
        const double d = (t - mu[k]) / sigma[k];
        v += amp[k] * std::exp(-0.5 * d * d);
      }
      sig[c][b] = v;
    }
  }
  return sig;
}

DomainDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto sig = synth_signatures(cfg);
  const std::size_t H = cfg.height, W = cfg.width, P = H * W;
  Rng rng(cfg.seed);

  // Blob growth: multi-source shortest paths under random edge costs. The
  // first `classes` seeds carry classes 0..K-1 so every class is present.
  const std::size_t n_seeds = std::max<std::size_t>(
      cfg.classes, static_cast<std::size_t>(std::lround(static_cast<double>(P) /
                                                        (cfg.blob_scale * cfg.blob_scale))));
  std::vector<std::size_t> order(P);
  for (std::size_t i = 0; i < P; ++i) order[i] = i;
  const std::size_t seeds = std::min(n_seeds, P);
  for (std::size_t i = 0; i < seeds; ++i) std::swap(order[i], order[i + rng.below(P - i)]);

  std::vector<int> cls(P, -1);
  std::vector<double> dist(P, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::size_t px = order[s];
    const int c = s < cfg.classes ? static_cast<int>(s) : static_cast<int>(rng.below(cfg.classes));
    cls[px] = c;
    dist[px] = 0.0;
    frontier.push({0.0, px});
  }
  std::vector<char> done(P, 0);
  while (!frontier.empty()) {
    const auto [d, px] = frontier.top();
    frontier.pop();
    if (done[px]) continue;
    done[px] = 1;
    const std::size_t y = px / W, x = px % W;
    const std::size_t nbr[4] = {y > 0 ? px - W : P, y + 1 < H ? px + W : P, x > 0 ? px - 1 : P,
                                x + 1 < W ? px + 1 : P};
    for (std::size_t q : nbr) {
      if (q == P || done[q]) continue;
      const double nd = d + 0.5 + rng.uniform();
      if (nd < dist[q]) {
        dist[q] = nd;
        cls[q] = cls[px];
        frontier.push({nd, q});
      }
    }
  }

  DomainDataset ds;
  ds.name = cfg.name;
  ds.sensor = cfg.sensor;
  ds.classes = cfg.classes;
  ds.cube = HyperCube(cfg.bands, H, W);
  ds.labels = LabelRaster{H, W, std::vector<int>(P)};
  for (std::size_t px = 0; px < P; ++px) ds.labels.labels[px] = cls[px] + 1;
  for (std::size_t px = 0; px < P; ++px) {
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      const double noise = cfg.noise_std > 0 ? cfg.noise_std * rng.normal() : 0.0;
      ds.cube.data[b * P + px] = static_cast<float>(sig[cls[px]][b] + noise);
    }
  }
  return ds;
}

}  // namespace hsicnn
