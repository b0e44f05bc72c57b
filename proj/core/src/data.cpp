#include <algorithm>
#include <cmath>
#include <numeric>

#include "hsicnn/data.hpp"

namespace hsicnn {

namespace {

// Mirror without repeating the edge: -1 -> 1, n -> n - 2.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (static_cast<std::ptrdiff_t>(n) - 1);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

// Source coordinate read by output (y, x) under D4 element k, side s.
std::pair<std::size_t, std::size_t> d4_source(int k, std::size_t y, std::size_t x, std::size_t s) {
  const std::size_t ry = s - 1 - y, rx = s - 1 - x;
  switch (k) {
    case 0: return {y, x};
    case 1: return {x, ry};
    case 2: return {ry, rx};
    case 3: return {rx, y};
    case 4: return {y, rx};
    case 5: return {ry, x};
    case 6: return {x, y};
    case 7: return {rx, ry};
  }
  return {y, x};
}

void check_d4(int k, std::size_t h, std::size_t w) {
  if (k < 0 || k > 7) throw ConfigError("augment_d4: element index " + std::to_string(k) + " not in 0..7");
  if (h != w) {
    throw DimensionError("augment_d4: patch must be square, got " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
}

}  // namespace

std::size_t DomainDataset::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(labels.labels.begin(), labels.labels.end(), [](int l) { return l > 0; }));
}

void DomainDataset::validate() const {
  if (cube.data.size() != cube.bands * cube.height * cube.width) {
    throw DataError(name + ": cube data length does not match bands*height*width");
  }
  if (labels.height != cube.height || labels.width != cube.width) {
    throw DataError(name + ": label raster " + std::to_string(labels.height) + "x" +
                    std::to_string(labels.width) + " does not match cube " +
                    std::to_string(cube.height) + "x" + std::to_string(cube.width));
  }
  if (classes == 0) throw DataError(name + ": class count must be positive");
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const int l = labels.labels[i];
    if (l < 0 || static_cast<std::size_t>(l) > classes) {
      throw DataError(name + ": label " + std::to_string(l) + " at pixel " + std::to_string(i) +
                      " exceeds declared class count " + std::to_string(classes));
    }
  }
  std::vector<char> in_train(labels.labels.size(), 0);
  for (std::size_t i : train_idx) {
    if (i >= labels.labels.size() || labels.labels[i] == 0) {
      throw DataError(name + ": train index " + std::to_string(i) + " is not a labeled pixel");
    }
    in_train[i] = 1;
  }
  for (std::size_t i : test_idx) {
    if (i >= labels.labels.size() || labels.labels[i] == 0) {
      throw DataError(name + ": test index " + std::to_string(i) + " is not a labeled pixel");
    }
    if (in_train[i]) throw DataError(name + ": pixel " + std::to_string(i) + " in both splits");
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_per_class(
    const DomainDataset& ds, std::size_t n_per_class, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.labels.labels.size(); ++i) {
    const int l = ds.labels.labels[i];
    if (l > 0) {
      if (static_cast<std::size_t>(l) > ds.classes) {
        throw DataError(ds.name + ": label " + std::to_string(l) + " exceeds class count");
      }
      by_class[l - 1].push_back(i);
    }
  }
  std::vector<std::size_t> train, test;
  for (std::size_t c = 0; c < ds.classes; ++c) {
    auto& px = by_class[c];
    if (px.size() < n_per_class) {
      throw DataError(ds.name + ": class " + std::to_string(c + 1) + " has " +
                      std::to_string(px.size()) + " labeled pixels, " + std::to_string(n_per_class) +
                      " requested for training");
    }
    // Partial Fisher-Yates: the first n_per_class slots become the train draw.
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t j = i + rng.below(px.size() - i);
      std::swap(px[i], px[j]);
    }
    train.insert(train.end(), px.begin(), px.begin() + n_per_class);
    test.insert(test.end(), px.begin() + n_per_class, px.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

void use_all_for_training(DomainDataset& ds) {
  ds.train_idx.clear();
  ds.test_idx.clear();
  for (std::size_t i = 0; i < ds.labels.labels.size(); ++i) {
    if (ds.labels.labels[i] > 0) ds.train_idx.push_back(i);
  }
}

NormalizationReport normalize_bands(DomainDataset& ds) {
  if (ds.train_idx.empty()) {
    throw DataError(ds.name + ": cannot normalize bands without training pixels");
  }
  NormalizationReport rep;
  const std::size_t B = ds.cube.bands, P = ds.cube.pixels();
  const double count = static_cast<double>(ds.train_idx.size());
  rep.mean.resize(B);
  rep.stddev.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    float* band = ds.cube.data.data() + b * P;
    Accum sum = 0;
    for (std::size_t i : ds.train_idx) sum += band[i];
    const Accum mean = sum / count;
    Accum sq = 0;
    for (std::size_t i : ds.train_idx) sq += (band[i] - mean) * (band[i] - mean);
    Accum sd = std::sqrt(sq / count);
    if (!(sd > 1e-12)) {
      rep.warnings.push_back(ds.name + ": band " + std::to_string(b) +
                             " has zero variance on the train split; centered only");
      sd = 1.0;
    }
    rep.mean[b] = mean;
    rep.stddev[b] = sd;
    for (std::size_t i = 0; i < P; ++i) band[i] = static_cast<float>((band[i] - mean) / sd);
  }
  return rep;
}

Tensor4<float> extract_patch(const HyperCube& cube, std::size_t x, std::size_t y, std::size_t patch) {
  if (patch == 0 || patch % 2 == 0) {
    throw ConfigError("extract_patch: patch size must be odd, got " + std::to_string(patch));
  }
  if (x >= cube.width || y >= cube.height) {
    throw DimensionError("extract_patch: pixel (" + std::to_string(x) + "," + std::to_string(y) +
                         ") outside " + std::to_string(cube.width) + "x" +
                         std::to_string(cube.height) + " raster");
  }
  Tensor4<float> out(1, cube.bands, patch, patch);
  extract_patch_into(cube, y * cube.width + x, out, 0);
  return out;
}

void extract_patch_into(const HyperCube& cube, std::size_t pixel, Tensor4<float>& batch,
                        std::size_t n) {
  const std::size_t patch = batch.h();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(patch / 2);
  const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(pixel / cube.width);
  const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(pixel % cube.width);
  std::size_t rows[64], cols[64];
  std::vector<std::size_t> rows_v, cols_v;
  std::size_t* ry = rows;
  std::size_t* rx = cols;
  if (patch > 64) {
    rows_v.resize(patch);
    cols_v.resize(patch);
    ry = rows_v.data();
    rx = cols_v.data();
  }
  for (std::size_t d = 0; d < patch; ++d) {
    ry[d] = reflect(y0 + static_cast<std::ptrdiff_t>(d) - half, cube.height);
    rx[d] = reflect(x0 + static_cast<std::ptrdiff_t>(d) - half, cube.width);
  }
  for (std::size_t b = 0; b < cube.bands; ++b) {
    const float* band = cube.data.data() + b * cube.pixels();
    float* dst = batch.data() + batch.index(n, b, 0, 0);
    for (std::size_t dy = 0; dy < patch; ++dy) {
      const float* row = band + ry[dy] * cube.width;
      for (std::size_t dx = 0; dx < patch; ++dx) dst[dy * patch + dx] = row[rx[dx]];
    }
  }
}

template <typename T>
Tensor4<T> augment_d4(const Tensor4<T>& patch, int k) {
  check_d4(k, patch.h(), patch.w());
  const std::size_t s = patch.h();
  Tensor4<T> out(patch.shape());
  for (std::size_t n = 0; n < patch.n(); ++n)
    for (std::size_t c = 0; c < patch.c(); ++c)
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          const auto [sy, sx] = d4_source(k, y, x, s);
          out(n, c, y, x) = patch(n, c, sy, sx);
        }
  return out;
}

void augment_d4_inplace(Tensor4<float>& batch, std::size_t n, int k) {
  check_d4(k, batch.h(), batch.w());
  if (k == 0) return;
  const std::size_t s = batch.h();
  std::vector<float> tmp(s * s);
  for (std::size_t c = 0; c < batch.c(); ++c) {
    auto plane = batch.plane(n, c);
    std::copy(plane.begin(), plane.end(), tmp.begin());
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const auto [sy, sx] = d4_source(k, y, x, s);
        plane[y * s + x] = tmp[sy * s + sx];
      }
  }
}

template Tensor4<float> augment_d4<float>(const Tensor4<float>&, int);
template Tensor4<double> augment_d4<double>(const Tensor4<double>&, int);
template Tensor4<int> augment_d4<int>(const Tensor4<int>&, int);

}  // namespace hsicnn
