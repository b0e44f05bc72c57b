#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hsicnn/data.hpp"
#include "hsicnn/network.hpp"
#include "hsicnn/trainer.hpp"

namespace hsicnn {

enum class ExperimentId {
  ScheduleSweep,
  DepthSweep,
  SourceSize,
  SensorAblation,
  SingleVsMulti,
  Pretrain,
  Finetune,
};

ExperimentId parse_experiment_id(const std::string& s);
std::string to_string(ExperimentId id);

// A domain is either synthesized or loaded from a dataset manifest.
struct DomainSource {
  std::optional<SynthConfig> synth;
  std::filesystem::path manifest;
};

struct LabeledSchedule {
  std::string label;
  TrainSchedule schedule;
};

struct SourceCondition {
  std::string label;
  std::vector<std::string> sources;
};

struct PretrainConfig {
  std::vector<std::string> sources;
  TrainSchedule schedule;
  bool two_step = false;
  TrainSchedule step1;
  TrainSchedule step2;
};

/// Parsed experiment configuration. See README for the JSON schema.
struct ExperimentConfig {
  ExperimentId id = ExperimentId::ScheduleSweep;
  std::vector<std::uint64_t> seeds;
  NetworkSpec network;  // bands/classes are filled per domain
  std::map<std::string, DomainSource> domains;
  std::vector<std::string> domain_order;
  std::string target;
  std::size_t train_per_class = 200;
  PretrainConfig pretrain;
  TrainSchedule finetune;
  std::vector<LabeledSchedule> schedules;  // schedule_sweep
  std::vector<std::size_t> depths;         // depth_sweep
  std::vector<SourceCondition> conditions;  // source_size, sensor_ablation, single_vs_multi
  std::int64_t eval_every = 100;
  bool augment = true;
  bool augment_sources = true;
  bool normalize = true;
  std::filesystem::path checkpoint;  // optional pre-trained network (schedule_sweep, finetune)
  std::filesystem::path output_dir;

  // Throws ConfigError.
  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

TrainSchedule parse_schedule_json(const std::string& json_text);

struct ReportRow {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string condition;
  std::int64_t iteration = 0;
  std::string metric;
  double value = 0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<std::string> condition_order;

  // Header: experiment,seed,condition,iteration,metric,value
  void write_csv(std::ostream& out) const;
  // mean/min/max/count over seeds for every (condition, summary metric).
  std::string summary_json() const;
  std::vector<const ReportRow*> select(const std::string& condition, const std::string& metric) const;
};

// Metrics aggregated into summary.json.
bool is_summary_metric(const std::string& metric);

Report parse_report_csv(std::istream& in);

struct RunOptions {
  unsigned threads = 1;
  std::function<void(const std::string&)> progress;
};

// Dataset cache: every domain is materialized once (synthesized or loaded).
class DomainLibrary {
 public:
  explicit DomainLibrary(const ExperimentConfig& cfg);
  const DomainDataset& raw(const std::string& name) const;
  // Source domain: all labeled pixels train, bands standardized.
  DomainDataset source(const std::string& name) const;
  // Target domain: per-class split drawn with `rng`, standardized on the train split.
  DomainDataset target(const std::string& name, std::size_t per_class, Rng& rng) const;

 private:
  const ExperimentConfig& cfg_;
  std::map<std::string, DomainDataset> raw_;
};

// Independent stream for (seed, purpose), stable across thread counts.
Rng derive_rng(std::uint64_t seed, const std::string& purpose);

struct PretrainResult {
  CrossDomainNetwork<float> network;
  TrainMetrics metrics;
  std::size_t source_pixels = 0;
};

PretrainResult pretrain_sources(const ExperimentConfig& cfg, const DomainLibrary& lib,
                                const std::vector<std::string>& sources, std::size_t residual_modules,
                                std::uint64_t seed, const RunOptions& ro);

struct TargetRun {
  TrainMetrics metrics;
  double final_accuracy = 0;
  std::optional<Network<float>> network;  // set when requested
};

// Fine-tunes a transfer of `pretrained` (or trains from scratch when null).
TargetRun train_target(const ExperimentConfig& cfg, const DomainDataset& target,
                       const CrossDomainNetwork<float>* pretrained, std::size_t residual_modules,
                       const TrainSchedule& schedule, std::uint64_t seed, const RunOptions& ro,
                       bool keep_network = false);

Report run_schedule_sweep(const ExperimentConfig& cfg, const RunOptions& ro = {});
Report run_depth_sweep(const ExperimentConfig& cfg, const RunOptions& ro = {});
Report run_source_size(const ExperimentConfig& cfg, const RunOptions& ro = {});
Report run_sensor_ablation(const ExperimentConfig& cfg, const RunOptions& ro = {});
Report run_single_vs_multi(const ExperimentConfig& cfg, const RunOptions& ro = {});

Report run_experiment(const ExperimentConfig& cfg, const RunOptions& ro = {});

// Writes report.csv and summary.json into `dir`.
void write_report(const Report& report, const std::filesystem::path& dir);

std::string depth_label(std::size_t residual_modules);

}  // namespace hsicnn
