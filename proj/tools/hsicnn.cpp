// hsicnn: training and ablation harness for cross-domain hyperspectral CNNs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hsicnn/checkpoint.hpp"
#include "hsicnn/experiments.hpp"
#include "hsicnn/grad_check.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace hsicnn;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  unsigned threads = 1;
  std::string checkpoint;
  std::string experiment;
};

void progress(const std::string& line) { std::cerr << line << "\n"; }

ExperimentConfig load_config(const Flags& f) {
  if (f.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_experiment_config(f.config);
  if (f.seed) cfg.seeds = {*f.seed};
  if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
  if (cfg.seeds.empty()) cfg.seeds = {1};
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

void write_metrics(const TrainMetrics& m, const fs::path& dir) {
  std::ofstream csv(dir / "metrics.csv", std::ios::trunc);
  if (!csv) throw DataError("cannot write '" + (dir / "metrics.csv").string() + "'");
  m.write_csv(csv);
  write_text(dir / "summary.json", m.summary_json() + "\n");
}

int cmd_synth_gen(const Flags& f) {
  if (f.config.empty()) throw ConfigError("--config is required");
  const ExperimentConfig cfg = load_experiment_config(f.config);
  const fs::path out(f.out);
  fs::create_directories(out);
  int written = 0;
  for (const auto& name : cfg.domain_order) {
    const DomainSource& src = cfg.domains.at(name);
    if (!src.synth) continue;
    SynthConfig sc = *src.synth;
    if (f.seed) sc.seed = *f.seed;
    const DomainDataset ds = synth_generate(sc);
    DatasetManifest m;
    m.name = name;
    m.sensor = ds.sensor;
    m.header = name + ".hdr";
    m.data = name + ".img";
    m.labels = name + "_labels.txt";
    m.classes = ds.classes;
    write_envi(ds.cube, out / m.header, out / m.data, {});
    write_label_text(ds.labels, out / m.labels);
    write_manifest(m, out / (name + ".json"));
    std::cout << "wrote " << (out / (name + ".json")).string() << " (" << ds.cube.bands << " bands, "
              << ds.labeled_count() << " labeled pixels)\n";
    ++written;
  }
  if (written == 0) throw ConfigError("config declares no synthetic domains");
  return 0;
}

int cmd_pretrain(const Flags& f) {
  const ExperimentConfig cfg = load_config(f);
  if (cfg.pretrain.sources.empty()) throw ConfigError("config: 'pretrain.sources' must be non-empty");
  const DomainLibrary lib(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  RunOptions ro;
  ro.progress = progress;
  PretrainResult r = pretrain_sources(cfg, lib, cfg.pretrain.sources, cfg.network.residual_modules, seed, ro);
  const fs::path out(f.out);
  fs::create_directories(out);
  const std::int64_t iters = cfg.pretrain.two_step ? cfg.pretrain.step2.max_iter : cfg.pretrain.schedule.max_iter;
  save_checkpoint(r.network, {iters, {}}, out / "pretrained.ckpt");
  write_metrics(r.metrics, out);
  std::cout << "pretrained on " << r.source_pixels << " source pixels -> "
            << (out / "pretrained.ckpt").string() << "\n";
  return 0;
}

int cmd_target(const Flags& f, bool finetune) {
  ExperimentConfig cfg = load_config(f);
  if (finetune && cfg.checkpoint.empty()) throw ConfigError("finetune needs --checkpoint");
  if (!cfg.checkpoint.empty() && !fs::exists(cfg.checkpoint)) {
    throw ConfigError("checkpoint '" + cfg.checkpoint.string() + "' does not exist");
  }
  if (!cfg.domains.count(cfg.target)) throw ConfigError("config: unknown target '" + cfg.target + "'");
  const DomainLibrary lib(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  Rng split_rng = derive_rng(seed, "split");
  const DomainDataset target = lib.target(cfg.target, cfg.train_per_class, split_rng);
  std::optional<CrossDomainNetwork<float>> pre;
  std::size_t rm = cfg.network.residual_modules;
  if (finetune) {
    pre.emplace(load_cross_domain(cfg.checkpoint));
    rm = pre->residual_count();
  }
  RunOptions ro;
  ro.progress = progress;
  const TargetRun run = train_target(cfg, target, pre ? &*pre : nullptr, rm, cfg.finetune, seed, ro, true);
  const fs::path out(f.out);
  fs::create_directories(out);
  const std::string name = finetune ? "finetuned.ckpt" : "scratch.ckpt";
  save_checkpoint(*run.network, {cfg.finetune.max_iter, {}}, out / name);
  write_metrics(run.metrics, out);
  std::cout << "test accuracy " << format_number(run.final_accuracy) << " -> " << (out / name).string() << "\n";
  return 0;
}

int cmd_eval(const Flags& f) {
  const ExperimentConfig cfg = load_config(f);
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  if (!cfg.domains.count(cfg.target)) throw ConfigError("config: unknown target '" + cfg.target + "'");
  const Network<float> net = load_network(cfg.checkpoint);
  const DomainLibrary lib(cfg);
  Rng split_rng = derive_rng(cfg.seeds.front(), "split");
  const DomainDataset target = lib.target(cfg.target, cfg.train_per_class, split_rng);
  if (net.spec().bands != target.cube.bands || net.spec().classes != target.classes) {
    throw DimensionError("checkpoint expects " + std::to_string(net.spec().bands) + " bands / " +
                         std::to_string(net.spec().classes) + " classes, target has " +
                         std::to_string(target.cube.bands) + " / " + std::to_string(target.classes));
  }
  const double train_acc = evaluate(net, target, Split::Train);
  const double test_acc = evaluate(net, target, Split::Test);
  nlohmann::ordered_json j;
  j["target"] = cfg.target;
  j["seed"] = cfg.seeds.front();
  j["train_accuracy"] = train_acc;
  j["test_accuracy"] = test_acc;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_experiment(const Flags& f) {
  ExperimentConfig cfg = load_config(f);
  if (!f.experiment.empty()) cfg.id = parse_experiment_id(f.experiment);
  RunOptions ro;
  ro.threads = f.threads;
  ro.progress = progress;
  const auto t0 = std::chrono::steady_clock::now();
  const Report report = run_experiment(cfg, ro);
  const fs::path out = f.out;
  write_report(report, out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << to_string(cfg.id) << ": " << report.rows.size() << " rows in " << format_number(secs)
            << " s -> " << (out / "report.csv").string() << "\n";
  return 0;
}

int cmd_gradcheck(const Flags& f) {
  const std::uint64_t first = f.seed.value_or(1);
  bool all = true;
  for (std::uint64_t s = first; s < first + 10; ++s) {
    for (const auto& rep : run_oracle_suite(s)) {
      for (const auto& e : rep.entries) {
        std::printf("seed %llu %-10s %-28s max_rel %.3e max_abs %.3e %s\n",
                    static_cast<unsigned long long>(s), rep.fragment.c_str(), e.name.c_str(),
                    e.max_rel_error, e.max_abs_error, e.pass ? "ok" : "FAIL");
      }
      all = all && rep.pass;
    }
  }
  std::printf("gradcheck: %s\n", all ? "PASS" : "FAIL");
  return all ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hsicnn: cross-domain CNN training and ablation harness"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON experiment config");
  app.add_option("--seed", f.seed, "Run seed (replaces the config's seed list)");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--threads", f.threads, "Parallel runs")->check(CLI::PositiveNumber);
  app.add_option("--checkpoint", f.checkpoint, "Checkpoint to fine-tune or evaluate");

  auto* pretrain = app.add_subcommand("pretrain", "Pre-train a cross-domain network on the source domains");
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a pre-trained checkpoint on the target");
  auto* scratch = app.add_subcommand("train-scratch", "Train a randomly initialized network on the target");
  auto* eval = app.add_subcommand("eval", "Evaluate a single-domain checkpoint on the target split");
  auto* experiment = app.add_subcommand("experiment", "Run an ablation and write report.csv + summary.json");
  experiment->add_option("id", f.experiment, "schedule_sweep | depth_sweep | source_size | sensor_ablation | single_vs_multi")
      ->required();
  auto* synth = app.add_subcommand("synth-gen", "Write the config's synthetic domains as ENVI + manifests");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every backward pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*pretrain) return cmd_pretrain(f);
    if (*finetune) return cmd_target(f, true);
    if (*scratch) return cmd_target(f, false);
    if (*eval) return cmd_eval(f);
    if (*experiment) return cmd_experiment(f);
    if (*synth) return cmd_synth_gen(f);
    if (*gradcheck) return cmd_gradcheck(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help();
  return 1;
}
