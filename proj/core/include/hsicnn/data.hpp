#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hsicnn/rng.hpp"
#include "hsicnn/tensor.hpp"

namespace hsicnn {

enum class Interleave { BSQ, BIL, BIP };

// ENVI "data type" codes for the supported sample formats.
enum class EnviDataType : int { Int16 = 2, Float32 = 4, Float64 = 5, UInt16 = 12 };

enum class ByteOrder : int { Little = 0, Big = 1 };

/// Hyperspectral cube held band-major: data[(b * height + y) * width + x].
struct HyperCube {
  std::size_t bands = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;
  std::vector<double> wavelengths;  // optional

  HyperCube() = default;
  HyperCube(std::size_t b, std::size_t h, std::size_t w)
      : bands(b), height(h), width(w), data(b * h * w, 0.0f) {}

  std::size_t pixels() const { return height * width; }
  float& at(std::size_t b, std::size_t y, std::size_t x) { return data[(b * height + y) * width + x]; }
  float at(std::size_t b, std::size_t y, std::size_t x) const {
    return data[(b * height + y) * width + x];
  }
  friend bool operator==(const HyperCube&, const HyperCube&) = default;
};

/// 0 = unlabeled, 1..K = classes.
struct LabelRaster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> labels;

  int at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  friend bool operator==(const LabelRaster&, const LabelRaster&) = default;
};

struct DomainDataset {
  std::string name;
  std::string sensor;  // A (AVIRIS), R (ROSIS), H (Hyperion), or free-form
  HyperCube cube;
  LabelRaster labels;
  std::size_t classes = 0;
  std::vector<std::size_t> train_idx;  // linear pixel indices y * width + x
  std::vector<std::size_t> test_idx;

  std::size_t labeled_count() const;
  // Zero-based class of a labeled pixel.
  int class_of(std::size_t pixel) const { return labels.labels[pixel] - 1; }
  // Checks dimensions, label range, and train/test disjointness. Throws DataError.
  void validate() const;
};

// ---- ENVI -----------------------------------------------------------------

struct EnviHeader {
  std::size_t samples = 0;
  std::size_t lines = 0;
  std::size_t bands = 0;
  std::size_t header_offset = 0;
  EnviDataType data_type = EnviDataType::Float32;
  Interleave interleave = Interleave::BSQ;
  ByteOrder byte_order = ByteOrder::Little;
  std::vector<double> wavelengths;
  std::map<std::string, std::string> fields;  // every key, lower-cased, values verbatim
};

// Parses `key = value` lines; brace-delimited values may span lines.
// Requires samples, lines, bands, data type and interleave.
EnviHeader parse_envi_header(const std::string& text);

HyperCube load_envi(const std::filesystem::path& header_path, const std::filesystem::path& data_path);

struct EnviWriteOptions {
  Interleave interleave = Interleave::BSQ;
  EnviDataType data_type = EnviDataType::Float32;
  ByteOrder byte_order = ByteOrder::Little;
};

void write_envi(const HyperCube& cube, const std::filesystem::path& header_path,
                const std::filesystem::path& data_path, const EnviWriteOptions& opt = {});

// Label rasters: single-band integer ENVI or a whitespace-separated text grid.
LabelRaster load_label_envi(const std::filesystem::path& header_path,
                            const std::filesystem::path& data_path);
LabelRaster load_label_text(const std::filesystem::path& path);
void write_label_text(const LabelRaster& labels, const std::filesystem::path& path);
void write_label_envi(const LabelRaster& labels, const std::filesystem::path& header_path,
                      const std::filesystem::path& data_path);

// {name, sensor, header, data, labels, classes}. `labels` is a text grid, or an
// ENVI header whose binary is `labels_data` (default: header path without .hdr).
// Relative paths resolve against the manifest's directory.
struct DatasetManifest {
  std::string name;
  std::string sensor;
  std::filesystem::path header;
  std::filesystem::path data;
  std::filesystem::path labels;
  std::filesystem::path labels_data;
  std::size_t classes = 0;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DomainDataset load_dataset(const DatasetManifest& m);

// ---- preprocessing --------------------------------------------------------

// Exactly n_per_class random pixels of every class go to train, all other
// labeled pixels to test; both sorted ascending. Throws DataError on shortfall.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_per_class(
    const DomainDataset& ds, std::size_t n_per_class, Rng& rng);

// Every labeled pixel is a training pixel (source domains).
void use_all_for_training(DomainDataset& ds);

struct NormalizationReport {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::string> warnings;
};

// Standardizes each band with statistics of the train pixels; zero-variance
// bands are only centered.
NormalizationReport normalize_bands(DomainDataset& ds);

// (1, bands, patch, patch) window centered on (x, y), reflect-padded at borders.
Tensor4<float> extract_patch(const HyperCube& cube, std::size_t x, std::size_t y, std::size_t patch);

// Writes the window for `pixel` into slot n of an existing batch tensor.
void extract_patch_into(const HyperCube& cube, std::size_t pixel, Tensor4<float>& batch,
                        std::size_t n);

// k-th element of D4: 0 identity, 1 rot90, 2 rot180, 3 rot270, 4 horizontal
// flip, 5 vertical flip, 6 transpose, 7 anti-transpose. Same map on every band.
template <typename T>
Tensor4<T> augment_d4(const Tensor4<T>& patch, int k);

// In place on sample n of a batch.
void augment_d4_inplace(Tensor4<float>& batch, std::size_t n, int k);

// ---- synthetic domains ----------------------------------------------------

struct SynthConfig {
  std::string name = "synth";
  std::string sensor = "A";
  std::size_t classes = 4;
  std::size_t bands = 32;
  std::size_t height = 64;
  std::size_t width = 64;
  // Seeds the class spectra. Domains sharing it see the same materials, sampled
  // at their own band count.
  std::uint64_t signature_seed = 1;
  double noise_std = 0.05;
  double blob_scale = 8.0;  // typical blob side length, pixels
  std::uint64_t seed = 1;   // class map and noise

  void validate() const;
};

// Smooth per-class spectra (sum of Gaussian bumps over the band axis), a
// blob-shaped class map grown from random seeds, plus Gaussian noise. Every
// pixel is labeled. Splits are left empty.
DomainDataset synth_generate(const SynthConfig& cfg);

// Class spectra used by synth_generate, (classes x bands).
std::vector<std::vector<double>> synth_signatures(const SynthConfig& cfg);

}  // namespace hsicnn
