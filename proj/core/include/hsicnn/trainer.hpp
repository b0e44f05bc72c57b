#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hsicnn/data.hpp"
#include "hsicnn/network.hpp"
#include "hsicnn/rng.hpp"

namespace hsicnn {

struct TrainSchedule {
  double base_lr = 0.001;
  double gamma = 0.1;
  std::int64_t step_size = 4000;
  std::int64_t max_iter = 5000;
  std::size_t batch = 128;
  double momentum = 0.9;
  double weight_decay = 0.0005;

  // Throws ConfigError.
  void validate() const;
};

// base_lr * gamma^floor(iter / step_size)
double lr_at(const TrainSchedule& s, std::int64_t iter);

struct MetricRecord {
  std::int64_t iteration = 0;  // iterations completed
  std::string domain;
  double loss = 0;      // mean training loss since the previous record
  double accuracy = 0;  // test accuracy; NaN when not evaluated
};

struct TrainMetrics {
  std::vector<MetricRecord> records;
  std::vector<double> seconds_per_100;  // wall clock, excluded from CSV output

  void append(const TrainMetrics& other);
  // Header: iteration,domain,loss,accuracy. Empty accuracy cell when not evaluated.
  void write_csv(std::ostream& out) const;
  std::string summary_json() const;
};

// One optimizer application, reported through TrainOptions::on_step.
struct StepEvent {
  std::string phase;
  std::int64_t iteration = 0;
  std::size_t branch = 0;
  double lr = 0;
  double shared_lr = 0;
  double loss = 0;
};

struct TrainOptions {
  std::int64_t eval_every = 100;
  bool augment = true;
  bool evaluate_test = true;
  std::string phase = "train";
  // Resume support: run iterations [start_iter, stop_iter). stop_iter < 0 means max_iter.
  std::int64_t start_iter = 0;
  std::int64_t stop_iter = -1;
  std::function<void(const StepEvent&)> on_step;
  std::function<void(const std::string&)> progress;
};

// (n, bands, patch, patch) batch and zero-based labels for the given pixels.
struct Batch {
  Tensor4<float> input;
  std::vector<int> labels;
};

// Samples `size` train pixels with replacement; each gets a uniformly random
// D4 element when `augment` is set.
Batch sample_batch(const DomainDataset& ds, std::size_t size, std::size_t patch, bool augment,
                   Rng& rng);

Batch gather_batch(const DomainDataset& ds, std::span<const std::size_t> pixels, std::size_t patch);

enum class Split { Train, Test };

// Overall accuracy in eval mode without augmentation. Throws DataError on an empty split.
double evaluate(const Network<float>& net, const DomainDataset& ds, Split split);

// Argmax predictions for the given pixels (ties go to the lowest class).
std::vector<int> predict_pixels(const Network<float>& net, const DomainDataset& ds,
                                std::span<const std::size_t> pixels);

// Scratch or fine-tune training on a single domain.
TrainMetrics train_single(Network<float>& net, const DomainDataset& ds, const TrainSchedule& s,
                          Rng& rng, const TrainOptions& opt = {});

// Every iteration visits the domains in order; each domain's gradient is
// applied immediately, with the shared store stepping at lr / N.
TrainMetrics train_cross_domain(CrossDomainNetwork<float>& net,
                                std::span<const DomainDataset* const> datasets,
                                const TrainSchedule& s, Rng& rng, const TrainOptions& opt = {});

// Index of the dataset with the most labeled pixels; first wins ties.
std::size_t largest_dataset(std::span<const DomainDataset* const> datasets);

// Step I trains the largest domain's branch alone (shared multiplier 1) with
// `step1`; Step II trains all domains jointly with `step2`, its schedule
// starting again at iteration 0.
TrainMetrics two_step_train(CrossDomainNetwork<float>& net,
                            std::span<const DomainDataset* const> datasets,
                            const TrainSchedule& step1, const TrainSchedule& step2, Rng& rng,
                            const TrainOptions& opt = {});

std::string format_number(double v);

}  // namespace hsicnn
