#include "hsicnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "hsicnn/checkpoint.hpp"
#include "json.hpp"
#include "spec_json.hpp"

namespace hsicnn {

using nlohmann::ordered_json;

namespace {

const char* const kIdNames[] = {"schedule_sweep", "depth_sweep", "source_size", "sensor_ablation",
                                "single_vs_multi", "pretrain", "finetune"};

TrainSchedule schedule_from(const ordered_json& j, const TrainSchedule& defaults) {
  if (!j.is_object()) throw ConfigError("schedule: expected a JSON object");
  TrainSchedule s = defaults;
  try {
    s.base_lr = j.value("base_lr", s.base_lr);
    s.gamma = j.value("gamma", s.gamma);
    s.step_size = j.value("step_size", s.step_size);
    s.max_iter = j.value("max_iter", s.max_iter);
    s.batch = j.value("batch", s.batch);
    s.momentum = j.value("momentum", s.momentum);
    s.weight_decay = j.value("weight_decay", s.weight_decay);
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  s.validate();
  return s;
}

SynthConfig synth_from(const ordered_json& j, const std::string& name) {
  SynthConfig c;
  c.name = name;
  try {
    c.sensor = j.value("sensor", c.sensor);
    c.classes = j.value("classes", c.classes);
    c.bands = j.value("bands", c.bands);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.signature_seed = j.value("signature_seed", c.signature_seed);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.blob_scale = j.value("blob_scale", c.blob_scale);
    c.seed = j.value("seed", c.seed);
  } catch (const ordered_json::exception& e) {
    throw ConfigError("domain '" + name + "': " + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
T get_or(const ordered_json& j, const char* key, T def) {
  try {
    return j.value(key, def);
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

using Task = std::function<std::vector<ReportRow>()>;

// Runs tasks on up to `threads` workers and merges rows by a stable sort on
// (condition order, seed, iteration).
Report run_tasks(const std::vector<Task>& tasks, const std::vector<std::string>& condition_order,
                 unsigned threads) {
  std::vector<std::vector<ReportRow>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(tasks.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  Report r;
  r.condition_order = condition_order;
  for (auto& rows : results) r.rows.insert(r.rows.end(), rows.begin(), rows.end());
  auto rank = [&](const std::string& c) {
    auto it = std::find(condition_order.begin(), condition_order.end(), c);
    return static_cast<std::size_t>(it - condition_order.begin());
  };
  std::stable_sort(r.rows.begin(), r.rows.end(), [&](const ReportRow& a, const ReportRow& b) {
    const auto ra = rank(a.condition), rb = rank(b.condition);
    if (ra != rb) return ra < rb;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.iteration < b.iteration;
  });
  return r;
}

void append_target_rows(std::vector<ReportRow>& rows, const std::string& experiment,
                        std::uint64_t seed, const std::string& condition, const TargetRun& run,
                        const TrainSchedule& schedule) {
  for (const auto& rec : run.metrics.records) {
    rows.push_back({experiment, seed, condition, rec.iteration, "train_loss", rec.loss});
    if (!std::isnan(rec.accuracy)) {
      rows.push_back({experiment, seed, condition, rec.iteration, "test_accuracy", rec.accuracy});
    }
  }
  // The first lr drop, kept so curves can be split there when plotted.
  if (schedule.step_size < schedule.max_iter) {
    rows.push_back({experiment, seed, condition, schedule.step_size, "step_boundary",
                    static_cast<double>(schedule.step_size)});
  }
  rows.push_back({experiment, seed, condition, schedule.max_iter, "final_accuracy", run.final_accuracy});
}

std::function<void(const std::string&)> prefixed(const RunOptions& ro, const std::string& prefix) {
  if (!ro.progress) return {};
  auto sink = ro.progress;
  return [sink, prefix](const std::string& line) { sink(prefix + " " + line); };
}

std::vector<const DomainDataset*> pointers(const std::vector<DomainDataset>& v) {
  std::vector<const DomainDataset*> out;
  for (const auto& d : v) out.push_back(&d);
  return out;
}

Report run_source_conditions(const ExperimentConfig& cfg, const RunOptions& ro) {
  const DomainLibrary lib(cfg);
  const std::string exp = to_string(cfg.id);
  std::vector<std::string> order;
  for (const auto& c : cfg.conditions) order.push_back(c.label);
  std::vector<Task> tasks;
  for (const auto& cond : cfg.conditions) {
    for (std::uint64_t seed : cfg.seeds) {
      tasks.push_back([&, cond, seed] {
        Rng split_rng = derive_rng(seed, "split");
        const DomainDataset target = lib.target(cfg.target, cfg.train_per_class, split_rng);
        const std::size_t rm = cfg.network.residual_modules;
        std::vector<ReportRow> rows;
        if (cond.sources.empty()) {
          const TargetRun run = train_target(cfg, target, nullptr, rm, cfg.finetune, seed, ro);
          append_target_rows(rows, exp, seed, cond.label, run, cfg.finetune);
          rows.push_back({exp, seed, cond.label, 0, "source_pixels", 0.0});
          return rows;
        }
        RunOptions sub = ro;
        sub.progress = prefixed(ro, "[" + cond.label + " seed " + std::to_string(seed) + "]");
        PretrainResult pre = pretrain_sources(cfg, lib, cond.sources, rm, seed, sub);
        const TargetRun run = train_target(cfg, target, &pre.network, rm, cfg.finetune, seed, sub);
        append_target_rows(rows, exp, seed, cond.label, run, cfg.finetune);
        rows.push_back({exp, seed, cond.label, 0, "source_pixels",
                        static_cast<double>(pre.source_pixels)});
        return rows;
      });
    }
  }
  return run_tasks(tasks, order, ro.threads);
}

}  // namespace

ExperimentId parse_experiment_id(const std::string& s) {
  for (std::size_t i = 0; i < std::size(kIdNames); ++i) {
    if (s == kIdNames[i]) return static_cast<ExperimentId>(i);
  }
  throw ConfigError("unknown experiment id '" + s + "'");
}

std::string to_string(ExperimentId id) { return kIdNames[static_cast<std::size_t>(id)]; }

std::string depth_label(std::size_t residual_modules) {
  return std::to_string(5 + 2 * residual_modules) + "-layer";
}

TrainSchedule parse_schedule_json(const std::string& json_text) {
  try {
    return schedule_from(ordered_json::parse(json_text), TrainSchedule{});
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::filesystem::path& base_dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const ordered_json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  ExperimentConfig cfg;
  cfg.id = parse_experiment_id(get_or<std::string>(j, "experiment", "schedule_sweep"));
  if (j.contains("seeds")) {
    try {
      cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } catch (const ordered_json::exception& e) {
      throw ConfigError(std::string("config key 'seeds': ") + e.what());
    }
  }
  if (j.contains("network")) {
    NetworkSpec defaults;
    defaults.bands = 1;
    defaults.classes = 1;
    try {
      cfg.network = network_spec_from_json_value(nlohmann::json::parse(j["network"].dump()), defaults);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key 'network': ") + e.what());
    }
  } else {
    cfg.network.bands = 1;
    cfg.network.classes = 1;
  }
  if (j.contains("domains")) {
    if (!j["domains"].is_object()) throw ConfigError("config key 'domains': expected an object");
    for (const auto& [name, d] : j["domains"].items()) {
      DomainSource src;
      if (d.contains("synth")) {
        src.synth = synth_from(d["synth"], name);
        if (d.contains("sensor")) src.synth->sensor = d["sensor"].get<std::string>();
      } else if (d.contains("manifest")) {
        src.manifest = resolve(d["manifest"].get<std::string>());
      } else {
        throw ConfigError("domain '" + name + "': needs 'synth' or 'manifest'");
      }
      cfg.domains[name] = std::move(src);
      cfg.domain_order.push_back(name);
    }
  }
  cfg.target = get_or<std::string>(j, "target", "");
  cfg.train_per_class = get_or<std::size_t>(j, "train_per_class", cfg.train_per_class);
  cfg.eval_every = get_or<std::int64_t>(j, "eval_every", cfg.eval_every);
  cfg.augment = get_or<bool>(j, "augment", cfg.augment);
  cfg.augment_sources = get_or<bool>(j, "augment_sources", cfg.augment_sources);
  cfg.normalize = get_or<bool>(j, "normalize", cfg.normalize);
  if (j.contains("checkpoint")) cfg.checkpoint = resolve(j["checkpoint"].get<std::string>());
  if (j.contains("output")) cfg.output_dir = resolve(j["output"].get<std::string>());

  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    try {
      cfg.pretrain.sources = p.value("sources", std::vector<std::string>{});
    } catch (const ordered_json::exception& e) {
      throw ConfigError(std::string("config key 'pretrain.sources': ") + e.what());
    }
    if (p.contains("schedule")) cfg.pretrain.schedule = schedule_from(p["schedule"], TrainSchedule{});
    if (p.contains("two_step")) {
      const auto& t = p["two_step"];
      if (!t.contains("step1") || !t.contains("step2")) {
        throw ConfigError("config key 'pretrain.two_step': needs 'step1' and 'step2'");
      }
      cfg.pretrain.two_step = true;
      cfg.pretrain.step1 = schedule_from(t["step1"], TrainSchedule{});
      cfg.pretrain.step2 = schedule_from(t["step2"], TrainSchedule{});
    }
  }
  if (j.contains("finetune")) cfg.finetune = schedule_from(j["finetune"], TrainSchedule{});
  if (j.contains("schedules")) {
    for (const auto& s : j["schedules"]) {
      LabeledSchedule ls;
      ls.label = get_or<std::string>(s, "label", "");
      ls.schedule = schedule_from(s, cfg.finetune);
      cfg.schedules.push_back(std::move(ls));
    }
  }
  if (j.contains("depths")) {
    try {
      cfg.depths = j["depths"].get<std::vector<std::size_t>>();
    } catch (const ordered_json::exception& e) {
      throw ConfigError(std::string("config key 'depths': ") + e.what());
    }
  }
  if (j.contains("conditions")) {
    for (const auto& c : j["conditions"]) {
      SourceCondition sc;
      sc.label = get_or<std::string>(c, "label", "");
      sc.sources = c.value("sources", std::vector<std::string>{});
      cfg.conditions.push_back(std::move(sc));
    }
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: 'seeds' must be non-empty");
  auto need_domain = [&](const std::string& name, const char* role) {
    if (!domains.count(name)) {
      throw ConfigError(std::string("config: ") + role + " '" + name + "' is not a declared domain");
    }
  };
  if (id != ExperimentId::Pretrain) need_domain(target, "target");
  for (const auto& s : pretrain.sources) need_domain(s, "pretrain source");
  for (const auto& c : conditions) {
    if (c.label.empty()) throw ConfigError("config: every condition needs a label");
    for (const auto& s : c.sources) need_domain(s, "condition source");
  }
  const bool needs_pretrain_sources = id == ExperimentId::DepthSweep || id == ExperimentId::Pretrain ||
                                      (id == ExperimentId::ScheduleSweep && checkpoint.empty());
  if (needs_pretrain_sources && pretrain.sources.empty()) {
    throw ConfigError("config: 'pretrain.sources' must be non-empty for " + to_string(id));
  }
  if (!checkpoint.empty() && !std::filesystem::exists(checkpoint)) {
    throw ConfigError("config: checkpoint '" + checkpoint.string() + "' does not exist");
  }
  switch (id) {
    case ExperimentId::ScheduleSweep:
      if (schedules.empty()) throw ConfigError("config: schedule_sweep needs 'schedules'");
      for (const auto& s : schedules) {
        if (s.label.empty()) throw ConfigError("config: every schedule needs a label");
      }
      break;
    case ExperimentId::DepthSweep:
      if (depths.empty()) throw ConfigError("config: depth_sweep needs 'depths'");
      for (auto d : depths) {
        if (d < 2) throw ConfigError("config: depths must be >= 2 residual modules");
      }
      break;
    case ExperimentId::SourceSize:
      if (conditions.size() < 2) throw ConfigError("config: source_size needs >= 2 conditions");
      break;
    case ExperimentId::SensorAblation:
      if (conditions.size() != 2) throw ConfigError("config: sensor_ablation needs exactly 2 conditions");
      break;
    case ExperimentId::SingleVsMulti: {
      const auto singles = std::count_if(conditions.begin(), conditions.end(),
                                         [](const SourceCondition& c) { return c.sources.size() == 1; });
      const auto multis = std::count_if(conditions.begin(), conditions.end(),
                                        [](const SourceCondition& c) { return c.sources.size() > 1; });
      if (singles != 1 || multis < 1) {
        throw ConfigError("config: single_vs_multi needs one single-source and >= 1 multi-source condition");
      }
      break;
    }
    case ExperimentId::Finetune:
      if (checkpoint.empty()) throw ConfigError("config: finetune needs a checkpoint");
      break;
    case ExperimentId::Pretrain:
      break;
  }
}

bool is_summary_metric(const std::string& metric) {
  return metric == "final_accuracy" || metric == "source_pixels";
}

void Report::write_csv(std::ostream& out) const {
  out << "experiment,seed,condition,iteration,metric,value\n";
  for (const auto& r : rows) {
    out << r.experiment << "," << r.seed << "," << r.condition << "," << r.iteration << ","
        << r.metric << "," << format_number(r.value) << "\n";
  }
}

std::vector<const ReportRow*> Report::select(const std::string& condition,
                                             const std::string& metric) const {
  std::vector<const ReportRow*> out;
  for (const auto& r : rows) {
    if (r.condition == condition && r.metric == metric) out.push_back(&r);
  }
  return out;
}

std::string Report::summary_json() const {
  ordered_json conditions = ordered_json::object();
  std::vector<std::string> order = condition_order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.condition) == order.end()) order.push_back(r.condition);
  }
  for (const auto& cond : order) {
    ordered_json metrics = ordered_json::object();
    std::vector<std::string> names;
    for (const auto& r : rows) {
      if (r.condition == cond && is_summary_metric(r.metric) &&
          std::find(names.begin(), names.end(), r.metric) == names.end()) {
        names.push_back(r.metric);
      }
    }
    for (const auto& m : names) {
      // Aggregate the values exactly as written to report.csv.
      std::vector<double> v;
      for (const ReportRow* r : select(cond, m)) v.push_back(std::stod(format_number(r->value)));
      double sum = 0;
      for (double x : v) sum += x;
      metrics[m] = {{"mean", sum / static_cast<double>(v.size())},
                    {"min", *std::min_element(v.begin(), v.end())},
                    {"max", *std::max_element(v.begin(), v.end())},
                    {"count", v.size()}};
    }
    if (!metrics.empty()) conditions[cond] = metrics;
  }
  ordered_json j;
  j["experiment"] = rows.empty() ? "" : rows.front().experiment;
  j["conditions"] = conditions;
  return j.dump(2);
}

Report parse_report_csv(std::istream& in) {
  Report r;
  std::string line;
  if (!std::getline(in, line) || line != "experiment,seed,condition,iteration,metric,value") {
    throw ParseError("report: unexpected header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ParseError("report: malformed row '" + line + "'");
    ReportRow row{f[0], std::stoull(f[1]), f[2], std::stoll(f[3]), f[4], std::stod(f[5])};
    if (std::find(r.condition_order.begin(), r.condition_order.end(), row.condition) ==
        r.condition_order.end()) {
      r.condition_order.push_back(row.condition);
    }
    r.rows.push_back(std::move(row));
  }
  return r;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "report.csv", std::ios::trunc);
  if (!csv) throw DataError("cannot write '" + (dir / "report.csv").string() + "'");
  report.write_csv(csv);
  std::ofstream js(dir / "summary.json", std::ios::trunc);
  if (!js) throw DataError("cannot write '" + (dir / "summary.json").string() + "'");
  js << report.summary_json() << "\n";
}

DomainLibrary::DomainLibrary(const ExperimentConfig& cfg) : cfg_(cfg) {
  for (const auto& name : cfg.domain_order) {
    const DomainSource& src = cfg.domains.at(name);
    DomainDataset ds = src.synth ? synth_generate(*src.synth) : load_dataset(read_manifest(src.manifest));
    ds.name = name;
    raw_.emplace(name, std::move(ds));
  }
}

const DomainDataset& DomainLibrary::raw(const std::string& name) const {
  auto it = raw_.find(name);
  if (it == raw_.end()) throw ConfigError("unknown domain '" + name + "'");
  return it->second;
}

DomainDataset DomainLibrary::source(const std::string& name) const {
  DomainDataset ds = raw(name);
  use_all_for_training(ds);
  if (cfg_.normalize) normalize_bands(ds);
  return ds;
}

DomainDataset DomainLibrary::target(const std::string& name, std::size_t per_class, Rng& rng) const {
  DomainDataset ds = raw(name);
  auto [train, test] = split_per_class(ds, per_class, rng);
  ds.train_idx = std::move(train);
  ds.test_idx = std::move(test);
  if (cfg_.normalize) normalize_bands(ds);
  return ds;
}

Rng derive_rng(std::uint64_t seed, const std::string& purpose) {
  return Rng(seed * 0x9E3779B97F4A7C15ULL ^ fnv1a(purpose));
}

PretrainResult pretrain_sources(const ExperimentConfig& cfg, const DomainLibrary& lib,
                                const std::vector<std::string>& sources, std::size_t residual_modules,
                                std::uint64_t seed, const RunOptions& ro) {
  if (sources.empty()) throw ConfigError("pretraining needs at least one source domain");
  std::vector<DomainDataset> data;
  for (const auto& s : sources) data.push_back(lib.source(s));
  CrossDomainSpec spec;
  for (const auto& d : data) {
    NetworkSpec b = cfg.network;
    b.bands = d.cube.bands;
    b.classes = d.classes;
    b.residual_modules = residual_modules;
    spec.branches.push_back(b);
  }
  const std::string tag = "pretrain:" + join(sources, "+") + ":rm" + std::to_string(residual_modules);
  Rng init = derive_rng(seed, "init:" + tag);
  Rng train = derive_rng(seed, "train:" + tag);
  PretrainResult r{build_cross_domain<float>(spec, init), {}, 0};
  for (const auto& d : data) r.source_pixels += d.labeled_count();

  TrainOptions opt;
  opt.eval_every = cfg.eval_every;
  opt.augment = cfg.augment_sources;
  opt.evaluate_test = false;
  opt.phase = "pretrain";
  opt.progress = ro.progress;
  const auto ptrs = pointers(data);
  if (cfg.pretrain.two_step && data.size() > 1) {
    r.metrics = two_step_train(r.network, ptrs, cfg.pretrain.step1, cfg.pretrain.step2, train, opt);
  } else {
    r.metrics = train_cross_domain(r.network, ptrs, cfg.pretrain.schedule, train, opt);
  }
  return r;
}

TargetRun train_target(const ExperimentConfig& cfg, const DomainDataset& target,
                       const CrossDomainNetwork<float>* pretrained, std::size_t residual_modules,
                       const TrainSchedule& schedule, std::uint64_t seed, const RunOptions& ro,
                       bool keep_network) {
  NetworkSpec spec = cfg.network;
  spec.bands = target.cube.bands;
  spec.classes = target.classes;
  spec.residual_modules = residual_modules;
  const std::string kind = pretrained ? "finetune" : "scratch";
  Rng init = derive_rng(seed, "init:" + kind + ":rm" + std::to_string(residual_modules));
  Network<float> net = pretrained ? transfer_shared(*pretrained, spec, init)
                                  : build_backbone<float>(spec, init);
  Rng train = derive_rng(seed, "train:target");
  TrainOptions opt;
  opt.eval_every = cfg.eval_every;
  opt.augment = cfg.augment;
  opt.phase = kind;
  opt.progress = ro.progress;
  TargetRun run;
  run.metrics = train_single(net, target, schedule, train, opt);
  run.final_accuracy = evaluate(net, target, Split::Test);
  if (keep_network) run.network.emplace(std::move(net));
  return run;
}

Report run_schedule_sweep(const ExperimentConfig& cfg, const RunOptions& ro) {
  cfg.validate();
  const DomainLibrary lib(cfg);
  const std::string exp = to_string(cfg.id);
  std::vector<std::string> order;
  for (const auto& s : cfg.schedules) {
    order.push_back(s.label + ":pretrained");
    order.push_back(s.label + ":scratch");
  }
  std::optional<CrossDomainNetwork<float>> loaded;
  if (!cfg.checkpoint.empty()) loaded.emplace(load_cross_domain(cfg.checkpoint));

  std::vector<Task> tasks;
  for (std::uint64_t seed : cfg.seeds) {
    tasks.push_back([&, seed] {
      RunOptions sub = ro;
      sub.progress = prefixed(ro, "[seed " + std::to_string(seed) + "]");
      Rng split_rng = derive_rng(seed, "split");
      const DomainDataset target = lib.target(cfg.target, cfg.train_per_class, split_rng);
      std::optional<PretrainResult> pre;
      const CrossDomainNetwork<float>* source = loaded ? &*loaded : nullptr;
      if (!source) {
        pre.emplace(pretrain_sources(cfg, lib, cfg.pretrain.sources, cfg.network.residual_modules,
                                     seed, sub));
        source = &pre->network;
      }
      const std::size_t rm = source->residual_count();
      std::vector<ReportRow> rows;
      for (const auto& s : cfg.schedules) {
        const TargetRun ft = train_target(cfg, target, source, rm, s.schedule, seed, sub);
        append_target_rows(rows, exp, seed, s.label + ":pretrained", ft, s.schedule);
        const TargetRun sc = train_target(cfg, target, nullptr, rm, s.schedule, seed, sub);
        append_target_rows(rows, exp, seed, s.label + ":scratch", sc, s.schedule);
      }
      return rows;
    });
  }
  return run_tasks(tasks, order, ro.threads);
}

Report run_depth_sweep(const ExperimentConfig& cfg, const RunOptions& ro) {
  cfg.validate();
  const DomainLibrary lib(cfg);
  const std::string exp = to_string(cfg.id);
  std::vector<std::string> order;
  for (auto d : cfg.depths) {
    order.push_back(depth_label(d) + ":pretrained");
    order.push_back(depth_label(d) + ":scratch");
  }
  std::vector<Task> tasks;
  for (auto depth : cfg.depths) {
    for (std::uint64_t seed : cfg.seeds) {
      tasks.push_back([&, depth, seed] {
        RunOptions sub = ro;
        sub.progress = prefixed(ro, "[" + depth_label(depth) + " seed " + std::to_string(seed) + "]");
        Rng split_rng = derive_rng(seed, "split");
        const DomainDataset target = lib.target(cfg.target, cfg.train_per_class, split_rng);
        PretrainResult pre = pretrain_sources(cfg, lib, cfg.pretrain.sources, depth, seed, sub);
        std::vector<ReportRow> rows;
        const TargetRun ft = train_target(cfg, target, &pre.network, depth, cfg.finetune, seed, sub);
        append_target_rows(rows, exp, seed, depth_label(depth) + ":pretrained", ft, cfg.finetune);
        const TargetRun sc = train_target(cfg, target, nullptr, depth, cfg.finetune, seed, sub);
        append_target_rows(rows, exp, seed, depth_label(depth) + ":scratch", sc, cfg.finetune);
        return rows;
      });
    }
  }
  return run_tasks(tasks, order, ro.threads);
}

Report run_source_size(const ExperimentConfig& cfg, const RunOptions& ro) {
  cfg.validate();
  return run_source_conditions(cfg, ro);
}

Report run_sensor_ablation(const ExperimentConfig& cfg, const RunOptions& ro) {
  cfg.validate();
  return run_source_conditions(cfg, ro);
}

Report run_single_vs_multi(const ExperimentConfig& cfg, const RunOptions& ro) {
  cfg.validate();
  return run_source_conditions(cfg, ro);
}

Report run_experiment(const ExperimentConfig& cfg, const RunOptions& ro) {
  switch (cfg.id) {
    case ExperimentId::ScheduleSweep:
      return run_schedule_sweep(cfg, ro);
    case ExperimentId::DepthSweep:
      return run_depth_sweep(cfg, ro);
    case ExperimentId::SourceSize:
      return run_source_size(cfg, ro);
    case ExperimentId::SensorAblation:
      return run_sensor_ablation(cfg, ro);
    case ExperimentId::SingleVsMulti:
      return run_single_vs_multi(cfg, ro);
    case ExperimentId::Pretrain:
    case ExperimentId::Finetune:
      break;
  }
  throw ConfigError("'" + to_string(cfg.id) + "' is not a report-producing experiment");
}

}  // namespace hsicnn
