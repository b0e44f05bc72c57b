#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "hsicnn/checkpoint.hpp"
#include "hsicnn/experiments.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace hsicnn;
using hsicnn::testing::TempDir;

namespace {

// Small enough that a full sweep runs in about a second.
std::string tiny_config(const std::string& experiment, const std::string& extra) {
  return R"({
  "experiment": ")" + experiment + R"(",
  "seeds": [1, 2],
  "network": {"filters": 4, "patch": 3, "residual_modules": 2},
  "domains": {
    "tgt": {"synth": {"sensor": "A", "classes": 3, "bands": 6, "height": 10, "width": 10, "seed": 1}},
    "s1": {"synth": {"sensor": "B", "classes": 3, "bands": 8, "height": 8, "width": 8, "seed": 2}},
    "s2": {"synth": {"sensor": "C", "classes": 2, "bands": 4, "height": 8, "width": 8, "seed": 3}}
  },
  "target": "tgt",
  "train_per_class": 4,
  "eval_every": 5,
  "pretrain": {"sources": ["s1", "s2"], "schedule": {"base_lr": 0.01, "step_size": 8, "max_iter": 10, "batch": 4}},
  "finetune": {"base_lr": 0.01, "step_size": 8, "max_iter": 10, "batch": 4})" +
         extra + "\n}";
}

const std::string kSchedules =
    R"(, "schedules": [{"label": "8/10"}, {"label": "10/10", "step_size": 10, "max_iter": 10}])";
const std::string kConditions =
    R"(, "conditions": [{"label": "small", "sources": ["s2"]}, {"label": "large", "sources": ["s1", "s2"]}])";

std::string csv_of(const Report& r) {
  std::ostringstream out;
  r.write_csv(out);
  return out.str();
}

std::size_t count_metric(const Report& r, const std::string& metric) {
  std::size_t n = 0;
  for (const auto& row : r.rows) n += row.metric == metric;
  return n;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HSICNN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

}  // namespace

TEST(ExperimentConfig, ParsesFields) {
  auto cfg = parse_experiment_config(tiny_config("schedule_sweep", kSchedules));
  EXPECT_EQ(cfg.id, ExperimentId::ScheduleSweep);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(cfg.network.filters, 4u);
  EXPECT_EQ(cfg.domain_order, (std::vector<std::string>{"tgt", "s1", "s2"}));
  EXPECT_EQ(cfg.domains.at("s1").synth->bands, 8u);
  EXPECT_EQ(cfg.domains.at("s1").synth->sensor, "B");
  ASSERT_EQ(cfg.schedules.size(), 2u);
  EXPECT_EQ(cfg.schedules[0].schedule.step_size, 8);
  EXPECT_EQ(cfg.schedules[0].schedule.batch, 4u);  // inherited from finetune
  EXPECT_EQ(cfg.schedules[1].schedule.step_size, 10);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ExperimentConfig, Validation) {
  auto cfg = parse_experiment_config(tiny_config("schedule_sweep", kSchedules));
  cfg.seeds.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_experiment_config(tiny_config("schedule_sweep", "")).validate(), ConfigError);
  EXPECT_THROW(parse_experiment_config(tiny_config("no_such", "")), ConfigError);
  EXPECT_THROW(parse_experiment_config("{not json"), ConfigError);
  auto bad_target = parse_experiment_config(tiny_config("schedule_sweep", kSchedules));
  bad_target.target = "nope";
  EXPECT_THROW(bad_target.validate(), ConfigError);
  auto missing_ckpt = parse_experiment_config(tiny_config("finetune", ""));
  EXPECT_THROW(missing_ckpt.validate(), ConfigError);
  missing_ckpt.checkpoint = "/nonexistent/x.ckpt";
  EXPECT_THROW(missing_ckpt.validate(), ConfigError);
  auto depth = parse_experiment_config(tiny_config("depth_sweep", R"(, "depths": [1, 2])"));
  EXPECT_THROW(depth.validate(), ConfigError);
  auto sensor = parse_experiment_config(
      tiny_config("sensor_ablation", R"(, "conditions": [{"label": "a", "sources": ["s1"]}])"));
  EXPECT_THROW(sensor.validate(), ConfigError);
  auto svm = parse_experiment_config(tiny_config("single_vs_multi", kConditions));
  EXPECT_NO_THROW(svm.validate());
  svm.conditions[1].sources = {"s1"};
  EXPECT_THROW(svm.validate(), ConfigError);
  auto long_step = nlohmann::json::parse(tiny_config("schedule_sweep", kSchedules));
  long_step["finetune"]["step_size"] = 20;
  EXPECT_THROW(parse_experiment_config(long_step.dump()).validate(), ConfigError);
  EXPECT_THROW(parse_experiment_config(R"({"domains": {"x": {}}})"), ConfigError);
}

TEST(ExperimentConfig, RelativePathsResolveAgainstConfigDir) {
  TempDir dir("cfg");
  write_text(dir / "c.json", R"({"experiment": "finetune", "checkpoint": "sub/p.ckpt", "output": "out"})");
  auto cfg = load_experiment_config(dir / "c.json");
  EXPECT_EQ(cfg.checkpoint, dir / "sub/p.ckpt");
  EXPECT_EQ(cfg.output_dir, dir / "out");
}

TEST(Experiments, DeriveRngIsPurposeAndSeedSpecific) {
  auto a = derive_rng(1, "split"), b = derive_rng(1, "split");
  EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(derive_rng(1, "split").next(), derive_rng(2, "split").next());
  EXPECT_NE(derive_rng(1, "split").next(), derive_rng(1, "train:target").next());
}

TEST(Experiments, ScheduleSweepRowsAndDeterminism) {
  auto cfg = parse_experiment_config(tiny_config("schedule_sweep", kSchedules));
  const Report r = run_experiment(cfg);
  // 2 conditions x 2 schedules x 2 seeds.
  EXPECT_EQ(count_metric(r, "final_accuracy"), 8u);
  EXPECT_EQ(count_metric(r, "step_boundary"), 4u);  // only 8/10 has a drop
  EXPECT_EQ(r.condition_order,
            (std::vector<std::string>{"8/10:pretrained", "8/10:scratch", "10/10:pretrained", "10/10:scratch"}));
  for (const auto& row : r.rows) {
    EXPECT_TRUE(std::isfinite(row.value));
    EXPECT_NE(std::find(r.condition_order.begin(), r.condition_order.end(), row.condition),
              r.condition_order.end());
  }
  // Curves: evaluations at 5 and 10 for every run.
  EXPECT_EQ(r.select("8/10:scratch", "test_accuracy").size(), 4u);
  EXPECT_EQ(csv_of(r), csv_of(run_experiment(cfg)));
  RunOptions two;
  two.threads = 2;
  EXPECT_EQ(csv_of(r), csv_of(run_experiment(cfg, two)));
}

TEST(Experiments, SummaryMatchesCsvRecomputation) {
  auto cfg = parse_experiment_config(tiny_config("source_size", kConditions));
  const Report r = run_experiment(cfg);
  EXPECT_EQ(count_metric(r, "final_accuracy"), 4u);
  EXPECT_EQ(count_metric(r, "source_pixels"), 4u);
  TempDir dir("report");
  write_report(r, dir.path());
  std::ifstream csv(dir / "report.csv");
  const Report back = parse_report_csv(csv);
  EXPECT_EQ(back.rows.size(), r.rows.size());
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& row : back.rows) {
    if (is_summary_metric(row.metric)) groups[{row.condition, row.metric}].push_back(row.value);
  }
  std::ifstream js(dir / "summary.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["experiment"], "source_size");
  for (const auto& [key, values] : groups) {
    const auto& m = j["conditions"][key.first][key.second];
    double sum = 0;
    for (double v : values) sum += v;
    EXPECT_EQ(m["count"].get<std::size_t>(), values.size());
    EXPECT_EQ(m["mean"].get<double>(), sum / values.size());
    EXPECT_EQ(m["min"].get<double>(), *std::min_element(values.begin(), values.end()));
    EXPECT_EQ(m["max"].get<double>(), *std::max_element(values.begin(), values.end()));
  }
  // Source sizes: s2 alone is 64 pixels, s1 + s2 is 128.
  EXPECT_EQ(j["conditions"]["small"]["source_pixels"]["mean"].get<double>(), 64.0);
  EXPECT_EQ(j["conditions"]["large"]["source_pixels"]["mean"].get<double>(), 128.0);
}

TEST(Experiments, DepthSweepLabels) {
  auto cfg = parse_experiment_config(tiny_config("depth_sweep", R"(, "depths": [2, 4])"));
  cfg.seeds = {3};
  const Report r = run_experiment(cfg);
  EXPECT_EQ(count_metric(r, "final_accuracy"), 2u * 2u * 1u);
  EXPECT_EQ(r.select("13-layer:pretrained", "final_accuracy").size(), 1u);
  EXPECT_EQ(r.select("9-layer:scratch", "final_accuracy").size(), 1u);
  EXPECT_EQ(depth_label(5), "15-layer");
}

TEST(Experiments, SensorAblationTwoConditions) {
  auto cfg = parse_experiment_config(tiny_config(
      "sensor_ablation",
      R"(, "conditions": [{"label": "same", "sources": ["s1"]}, {"label": "other", "sources": ["s2"]}])"));
  const Report r = run_experiment(cfg);
  EXPECT_EQ(count_metric(r, "final_accuracy"), 2u * 2u);
}

TEST(Experiments, ScheduleSweepFromCheckpoint) {
  TempDir dir("sweep");
  auto cfg = parse_experiment_config(tiny_config("schedule_sweep", kSchedules));
  const DomainLibrary lib(cfg);
  auto pre = pretrain_sources(cfg, lib, {"s1"}, 3, 1, {});
  EXPECT_EQ(pre.source_pixels, 64u);
  save_checkpoint(pre.network, {}, dir / "p.ckpt");
  cfg.checkpoint = dir / "p.ckpt";
  cfg.pretrain.sources.clear();
  const Report r = run_experiment(cfg);
  EXPECT_EQ(count_metric(r, "final_accuracy"), 8u);
}

TEST(Experiments, ReportCsvParseErrors) {
  std::istringstream bad_header("a,b\n");
  EXPECT_THROW(parse_report_csv(bad_header), ParseError);
  std::istringstream bad_row("experiment,seed,condition,iteration,metric,value\nx,1,c\n");
  EXPECT_THROW(parse_report_csv(bad_row), ParseError);
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli");
  write_text(dir / "cfg.json", tiny_config("schedule_sweep", kSchedules));
  const std::string cfg = "--config " + (dir / "cfg.json").string();
  const std::string out = " --out " + dir.path().string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("pretrain --bogus-flag"), 1);
  EXPECT_EQ(run_cli("experiment schedule_sweep --config " + (dir / "none.json").string()), 1);
  EXPECT_EQ(run_cli("finetune " + cfg + out), 1);

  EXPECT_EQ(run_cli("synth-gen " + cfg + " --out " + (dir / "data").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "tgt.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "s1.hdr"));

  EXPECT_EQ(run_cli("pretrain " + cfg + out + "/pre"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "pre" / "pretrained.ckpt"));
  EXPECT_EQ(run_cli("finetune " + cfg + out + "/ft --checkpoint " + (dir / "pre" / "pretrained.ckpt").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "ft" / "finetuned.ckpt"));
  EXPECT_EQ(run_cli("train-scratch " + cfg + out + "/sc"), 0);
  EXPECT_EQ(run_cli("eval " + cfg + " --checkpoint " + (dir / "sc" / "scratch.ckpt").string()), 0);
  // A cross-domain checkpoint is not a single network.
  EXPECT_EQ(run_cli("eval " + cfg + " --checkpoint " + (dir / "pre" / "pretrained.ckpt").string()), 2);

  std::vector<std::uint8_t> junk{'n', 'o', 'p', 'e'};
  std::ofstream(dir / "junk.ckpt", std::ios::binary).write(reinterpret_cast<const char*>(junk.data()), 4);
  EXPECT_EQ(run_cli("eval " + cfg + " --checkpoint " + (dir / "junk.ckpt").string()), 2);

  EXPECT_EQ(run_cli("experiment schedule_sweep " + cfg + out + "/exp --threads 2"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "exp" / "report.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "exp" / "summary.json"));
  EXPECT_EQ(run_cli("experiment schedule_sweep " + cfg + out + "/exp --threads 0"), 1);
  EXPECT_EQ(run_cli("gradcheck"), 0);
}

TEST(Cli, NumericFailureExitsThree) {
  TempDir dir("cli");
  // A huge learning rate drives the loss to overflow.
  auto j = nlohmann::json::parse(tiny_config("schedule_sweep", kSchedules));
  j["finetune"]["base_lr"] = 1e30;
  j["finetune"]["momentum"] = 0.99;
  write_text(dir / "cfg.json", j.dump());
  EXPECT_EQ(run_cli("train-scratch --config " + (dir / "cfg.json").string() + " --out " +
                    dir.path().string()),
            3);
}

TEST(DeskConfigs, ParseAndValidate) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(HSICNN_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    ++n;
    ExperimentConfig cfg;
    ASSERT_NO_THROW(cfg = load_experiment_config(entry.path())) << entry.path();
    EXPECT_NO_THROW(cfg.validate()) << entry.path();
    EXPECT_EQ(cfg.network.filters, 16u);
    EXPECT_EQ(cfg.network.patch, 5u);
  }
  EXPECT_EQ(n, 5u);
}

TEST(Cli, DeskPipelineUnderTenMinutes) {
  TempDir dir("desk");
  const std::string cfg = "--config " + std::string(HSICNN_CONFIG_DIR) + "/desk_schedule_sweep.json --seed 1";
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run_cli("synth-gen " + cfg + " --out " + (dir / "data").string()), 0);
  ASSERT_EQ(run_cli("pretrain " + cfg + " --out " + (dir / "pre").string()), 0);
  ASSERT_EQ(run_cli("finetune " + cfg + " --out " + (dir / "ft").string() + " --checkpoint " +
                    (dir / "pre" / "pretrained.ckpt").string()),
            0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 600.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "ft" / "finetuned.ckpt"));
}
