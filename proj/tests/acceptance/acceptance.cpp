// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hsicnn/checkpoint.hpp"
#include "hsicnn/data.hpp"
#include "hsicnn/errors.hpp"
#include "hsicnn/experiments.hpp"
#include "hsicnn/grad_check.hpp"
#include "hsicnn/network.hpp"
#include "hsicnn/trainer.hpp"
#include "test_util.hpp"

using namespace hsicnn;
using hsicnn::testing::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

TrainSchedule schedule(double lr, std::int64_t step, std::int64_t max, std::size_t batch) {
  TrainSchedule s;
  s.base_lr = lr;
  s.step_size = step;
  s.max_iter = max;
  s.batch = batch;
  return s;
}

DomainDataset synth_source(const std::string& name, std::size_t bands, std::size_t classes,
                           std::size_t h, std::size_t w, std::uint64_t seed) {
  SynthConfig c;
  c.name = name;
  c.bands = bands;
  c.classes = classes;
  c.height = h;
  c.width = w;
  c.seed = seed;
  auto ds = synth_generate(c);
  use_all_for_training(ds);
  normalize_bands(ds);
  return ds;
}

NetworkSpec spec_for(const DomainDataset& ds, std::size_t filters) {
  NetworkSpec s;
  s.bands = ds.cube.bands;
  s.classes = ds.classes;
  s.filters = filters;
  s.patch = 5;
  return s;
}

std::vector<const Param<float>*> shared_view(const Network<float>& net) {
  std::vector<const Param<float>*> out;
  for (const Param<float>* p : net.parameters())
    if (p->shared) out.push_back(p);
  return out;
}

// ---- 1 -------------------------------------------------------------------

Outcome gradcheck() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst_rel = 0, worst_abs = 0;
  std::size_t fragments = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& rep : run_oracle_suite(seed)) {
      ++fragments;
      for (const auto& e : rep.entries) {
        worst_rel = std::max(worst_rel, e.max_rel_error);
        worst_abs = std::max(worst_abs, e.max_abs_error);
        o.require(e.pass, "seed " + std::to_string(seed) + " " + rep.fragment + " " + e.name);
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 120, "took " + fmt("%.1f", secs) + " s");
  if (o.pass)
    o.detail = std::to_string(fragments) + " fragments over 10 seeds, worst rel " + fmt("%.2e", worst_rel) +
               " abs " + fmt("%.2e", worst_abs) +
               ", " + fmt("%.1f", secs) + " s";
  return o;
}

// ---- 2 -------------------------------------------------------------------

Outcome depth_and_params() {
  Outcome o;
  Rng rng(2);
  const std::size_t expected_depth[] = {9, 11, 13, 15};
  for (std::size_t rm = 2; rm <= 5; ++rm) {
    for (std::size_t filters : {4, 16, 128}) {
      NetworkSpec s;
      s.bands = 7 + rm;
      s.classes = 3 + rm;
      s.filters = filters;
      s.residual_modules = rm;
      auto net = build_backbone<float>(s, rng);
      o.require(net.weighted_layer_count() == expected_depth[rm - 2],
                "depth for rm=" + std::to_string(rm));
      o.require(net.parameter_count() == testing::expected_parameter_count(s),
                "parameter count rm=" + std::to_string(rm) + " F=" + std::to_string(filters));
      std::size_t counted = 0;
      for (const Param<float>* p : net.parameters()) counted += p->value.size();
      o.require(counted == net.parameter_count(), "listed parameters disagree with count");
    }
  }
  // Cross-domain: each branch's private layers plus one shared store.
  NetworkSpec a, b;
  a.bands = 200;
  a.classes = 16;
  b.bands = 103;
  b.classes = 9;
  a.filters = b.filters = 32;
  auto cd = build_cross_domain<float>(CrossDomainSpec{{a, b}}, rng);
  const std::size_t shared = testing::expected_residual_parameter_count(a);
  const std::size_t physical = testing::expected_parameter_count(a) + testing::expected_parameter_count(b) - shared;
  o.require(cd.physical_parameter_count() == physical, "cross-domain physical count");
  if (o.pass) o.detail = "depths 9/11/13/15, counts match closed form";
  return o;
}

// ---- 3 -------------------------------------------------------------------

Outcome sharing() {
  Outcome o;
  std::vector<DomainDataset> dss;
  dss.push_back(synth_source("a", 12, 3, 12, 12, 31));
  dss.push_back(synth_source("b", 7, 4, 12, 12, 32));
  dss.push_back(synth_source("c", 20, 2, 12, 12, 33));
  CrossDomainSpec spec;
  for (const auto& d : dss) spec.branches.push_back(spec_for(d, 8));
  Rng rng(3);
  auto net = build_cross_domain<float>(spec, rng);
  const auto before = serialize_parameters(shared_view(net.branch(0)));

  const TrainSchedule s = schedule(0.01, 120, 200, 8);
  std::size_t events = 0, bad_lr = 0;
  TrainOptions opt;
  opt.eval_every = 100;
  opt.on_step = [&](const StepEvent& e) {
    ++events;
    const double want = lr_at(s, e.iteration) / 3.0;
    if (e.lr != lr_at(s, e.iteration) || std::abs(e.shared_lr - want) > 1e-15 * want) ++bad_lr;
  };
  std::vector<const DomainDataset*> ptrs;
  for (const auto& d : dss) ptrs.push_back(&d);
  train_cross_domain(net, ptrs, s, rng, opt);

  o.require(events == 600, "saw " + std::to_string(events) + " steps, expected 600");
  o.require(bad_lr == 0, std::to_string(bad_lr) + " steps with shared lr != base/3");
  const auto ref = serialize_parameters(shared_view(net.branch(0)));
  for (std::size_t i = 1; i < 3; ++i)
    o.require(serialize_parameters(shared_view(net.branch(i))) == ref,
              "shared store differs through branch " + std::to_string(i));
  o.require(ref != before, "shared store never updated");
  if (o.pass) o.detail = "600 steps at base/3, shared bytes identical across 3 branches";
  return o;
}

// ---- 4 -------------------------------------------------------------------

Outcome transfer() {
  Outcome o;
  auto src_a = synth_source("a", 16, 4, 10, 10, 41);
  auto src_b = synth_source("b", 24, 3, 10, 10, 42);
  CrossDomainSpec spec{{spec_for(src_a, 64), spec_for(src_b, 64)}};
  Rng rng(4);
  auto pre = build_cross_domain<float>(spec, rng);
  const DomainDataset* ptrs[] = {&src_a, &src_b};
  TrainOptions opt;
  opt.evaluate_test = false;
  opt.eval_every = 20;
  train_cross_domain(pre, ptrs, schedule(0.01, 20, 20, 8), rng, opt);

  TempDir dir("accept4");
  save_checkpoint(pre, TrainingState{20, rng.state()}, dir / "pre.ckpt");
  const auto loaded = load_cross_domain(dir / "pre.ckpt");

  NetworkSpec tgt;
  tgt.bands = 40;
  tgt.classes = 10;
  tgt.filters = 64;
  Rng trng(44);
  auto net = transfer_shared(loaded, tgt, trng);

  bool running_stats_moved = false;
  for (const auto* bn : pre.branch(0).batchnorms())
    for (float v : bn->running_mean) running_stats_moved |= v != 0.0f;
  o.require(running_stats_moved, "pre-training left running stats at init");

  for (std::size_t k = 0; k < loaded.residual_count(); ++k) {
    const auto& a = loaded.shared_module(k);
    const auto& b = net.residual(k);
    const auto& orig = pre.shared_module(k);
    for (auto [x, y, z] : {std::tuple{&a.first, &b.first, &orig.first}, std::tuple{&a.second, &b.second, &orig.second}}) {
      o.require(x->conv.weight.value == y->conv.weight.value && x->conv.bias.value == y->conv.bias.value &&
                    x->bn.scale.value == y->bn.scale.value && x->bn.shift.value == y->bn.shift.value,
                "residual module " + std::to_string(k + 1) + " not copied bit-exactly");
      o.require(z->conv.weight.value == y->conv.weight.value, "checkpoint changed residual weights");
    }
  }
  for (const auto* bn : net.batchnorms()) {
    o.require(std::all_of(bn->running_mean.begin(), bn->running_mean.end(), [](float v) { return v == 0.0f; }) &&
                  std::all_of(bn->running_var.begin(), bn->running_var.end(), [](float v) { return v == 1.0f; }),
              "running stats not reset");
  }
  auto within = [&](double got, double want, const std::string& what) {
    o.require(std::abs(got - want) <= 0.1 * want, what + " std " + fmt("%.5f", got));
  };
  within(testing::pooled_std({&net.bank(0).conv, &net.bank(1).conv, &net.bank(2).conv}), 0.01, "bank");
  within(testing::sample_std(net.c2().conv.weight.value), 0.01, "C2");
  within(testing::pooled_std({&net.c7().conv, &net.c8().conv}), 0.005, "C7/C8");
  within(testing::sample_std(net.c9().weight.value), 0.01, "C9");
  if (o.pass) o.detail = "residual modules bit-exact through checkpoint, fresh layers at target std, stats reset";
  return o;
}

// ---- 5 -------------------------------------------------------------------

Outcome overfit() {
  Outcome o;
  const auto t0 = Clock::now();
  std::string iters;
  for (std::uint64_t seed : {1, 2, 3}) {
    // 2 classes, 50 labeled pixels, all used for training.
    SynthConfig c;
    c.name = "overfit";
    c.classes = 2;
    c.bands = 8;
    c.height = 5;
    c.width = 10;
    c.seed = 50 + seed;
    c.noise_std = 0.1;
    DomainDataset ds = synth_generate(c);
    use_all_for_training(ds);
    normalize_bands(ds);
    NetworkSpec s = spec_for(ds, 16);
    Rng rng(seed);
    auto net = build_backbone<float>(s, rng);
    const TrainSchedule sched = schedule(0.01, 1500, 2000, 32);
    TrainOptions opt;
    opt.evaluate_test = false;
    opt.eval_every = 100;
    std::int64_t reached = -1;
    for (std::int64_t start = 0; start < sched.max_iter; start += 100) {
      opt.start_iter = start;
      opt.stop_iter = start + 100;
      train_single(net, ds, sched, rng, opt);
      if (evaluate(net, ds, Split::Train) >= 0.99) {
        reached = start + 100;
        break;
      }
    }
    o.require(reached > 0, "seed " + std::to_string(seed) + " stayed below 0.99");
    iters += (iters.empty() ? "" : "/") + std::to_string(reached);
  }
  const double secs = seconds_since(t0);
  o.require(secs < 180, "took " + fmt("%.1f", secs) + " s");
  if (o.pass) o.detail = "train acc >= 0.99 by iteration " + iters + ", " + fmt("%.1f", secs) + " s";
  return o;
}

// ---- 6 -------------------------------------------------------------------

const char* kTrendConfig = R"({
  "experiment": "schedule_sweep",
  "seeds": [1, 2, 3, 4, 5],
  "network": {"filters": 16, "patch": 5, "residual_modules": 2, "dropout_rate": 0.2},
  "domains": {
    "target": {"synth": {"sensor": "A", "classes": 6, "bands": 32, "height": 64, "width": 64,
                         "signature_seed": 7, "noise_std": 0.3, "seed": 101}},
    "src_a": {"synth": {"sensor": "B", "classes": 8, "bands": 48, "height": 64, "width": 64,
                        "signature_seed": 7, "noise_std": 0.3, "seed": 202}},
    "src_b": {"synth": {"sensor": "C", "classes": 8, "bands": 24, "height": 64, "width": 64,
                        "signature_seed": 7, "noise_std": 0.3, "seed": 303}}
  },
  "target": "target",
  "train_per_class": 30,
  "eval_every": 20,
  "pretrain": {"sources": ["src_a", "src_b"],
               "schedule": {"base_lr": 0.02, "step_size": 400, "max_iter": 500, "batch": 32}},
  "finetune": {"base_lr": 0.02, "step_size": 400, "max_iter": 500, "batch": 32},
  "schedules": [{"label": "400/500"}]
})";

Outcome convergence_trend() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto cfg = parse_experiment_config(kTrendConfig);
  const Report r = run_experiment(cfg);
  const std::string label = cfg.schedules.front().label;
  auto first_at = [&](const std::string& cond, std::uint64_t seed) -> std::int64_t {
    for (const ReportRow* row : r.select(label + ":" + cond, "test_accuracy"))
      if (row->seed == seed && row->value >= 0.90) return row->iteration;
    return -1;
  };
  auto final_of = [&](const std::string& cond, std::uint64_t seed) {
    for (const ReportRow* row : r.select(label + ":" + cond, "final_accuracy"))
      if (row->seed == seed) return row->value;
    return std::nan("");
  };
  int faster = 0, close = 0;
  std::string trace;
  for (std::uint64_t seed : cfg.seeds) {
    const std::int64_t p = first_at("pretrained", seed), q = first_at("scratch", seed);
    faster += p >= 0 && (q < 0 || p <= q);
    const double fp = final_of("pretrained", seed), fs = final_of("scratch", seed);
    close += std::abs(fp - fs) <= 0.03;
    trace += " s" + std::to_string(seed) + ":" + std::to_string(p) + "/" + std::to_string(q) +
             fmt(" %.3f", fp) + fmt("/%.3f", fs);
  }
  o.require(faster >= 4, "fine-tuned first at 0.90 in " + std::to_string(faster) + "/5 seeds");
  o.require(close >= 3, "finals within 0.03 in " + std::to_string(close) + "/5 seeds");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("faster ") + std::to_string(faster) + "/5, close " +
              std::to_string(close) + "/5, " + fmt("%.0f", seconds_since(t0)) + " s;" + trace;
  return o;
}

// ---- 7 -------------------------------------------------------------------

Outcome two_step() {
  Outcome o;
  // The large source is listed second so the choice cannot be positional.
  auto small = synth_source("small", 10, 3, 8, 10, 71);
  auto large = synth_source("large", 14, 4, 20, 40, 72);
  o.require(large.labeled_count() == 10 * small.labeled_count(), "size ratio is not 10x");
  CrossDomainSpec spec{{spec_for(small, 8), spec_for(large, 8)}};
  Rng rng(7);
  auto net = build_cross_domain<float>(spec, rng);
  const TrainSchedule s1 = schedule(0.02, 30, 40, 8);
  const TrainSchedule s2 = schedule(0.005, 15, 25, 8);
  std::vector<StepEvent> log;
  TrainOptions opt;
  opt.eval_every = 10;
  opt.on_step = [&](const StepEvent& e) { log.push_back(e); };
  const DomainDataset* ptrs[] = {&small, &large};
  const TrainMetrics m = two_step_train(net, ptrs, s1, s2, rng, opt);

  std::vector<StepEvent> p1, p2;
  for (const auto& e : log) (e.phase == "step1" ? p1 : p2).push_back(e);
  o.require(p1.size() == 40, "step I logged " + std::to_string(p1.size()) + " steps");
  o.require(p2.size() == 50, "step II logged " + std::to_string(p2.size()) + " steps");
  for (std::size_t i = 0; i < p1.size(); ++i) {
    const auto& e = p1[i];
    o.require(e.branch == 1 && e.iteration == static_cast<std::int64_t>(i) && e.lr == lr_at(s1, e.iteration) &&
                  e.shared_lr == e.lr,
              "step I event " + std::to_string(i));
  }
  for (std::size_t i = 0; i < p2.size(); ++i) {
    const auto& e = p2[i];
    o.require(e.phase == "step2" && e.branch == i % 2 && e.iteration == static_cast<std::int64_t>(i / 2) &&
                  e.lr == lr_at(s2, e.iteration) && std::abs(e.shared_lr - e.lr / 2) <= 1e-15 * e.lr,
              "step II event " + std::to_string(i));
  }
  std::set<std::string> domains;
  for (const auto& rec : m.records) domains.insert(rec.domain);
  o.require(domains == std::set<std::string>{"step1/large", "step2/small", "step2/large"},
            "metric domains do not separate the phases");
  if (o.pass)
    o.detail = "step I 40 iters on the 10x source (lr 0.02 -> 0.002), step II restarts at 0 (lr 0.005 -> 0.0005, shared /2)";
  return o;
}

// ---- 8 -------------------------------------------------------------------

Outcome data_pipeline() {
  Outcome o;
  DomainDataset ds;
  ds.name = "fixture";
  ds.classes = 8;
  ds.cube = HyperCube(2, 100, 100);
  ds.labels.height = ds.labels.width = 100;
  ds.labels.labels.assign(10000, 0);
  for (std::size_t i = 0; i < 8504; ++i) ds.labels.labels[i] = static_cast<int>(i % 8) + 1;
  Rng rng(8);
  auto [train, test] = split_per_class(ds, 200, rng);
  o.require(train.size() == 1600 && test.size() == 6904,
            "split " + std::to_string(train.size()) + "/" + std::to_string(test.size()));
  std::vector<std::size_t> all = train;
  all.insert(all.end(), test.begin(), test.end());
  std::sort(all.begin(), all.end());
  o.require(std::adjacent_find(all.begin(), all.end()) == all.end() && all.size() == 8504, "split overlaps");

  // D4: closure, identity, inverses, associativity on a patch with distinct entries.
  Tensor4<float> patch(Shape4{1, 2, 5, 5});
  for (std::size_t i = 0; i < patch.size(); ++i) patch[i] = static_cast<float>(i);
  std::vector<Tensor4<float>> images;
  for (int k = 0; k < 8; ++k) images.push_back(augment_d4(patch, k));
  auto index_of = [&](const Tensor4<float>& t) {
    for (int k = 0; k < 8; ++k)
      if (images[k].vec() == t.vec()) return k;
    return -1;
  };
  o.require(images[0].vec() == patch.vec(), "element 0 is not the identity");
  std::set<int> distinct;
  for (const auto& im : images) distinct.insert(index_of(im));
  o.require(distinct.size() == 8, "D4 images not distinct");
  int table[8][8];
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      table[a][b] = index_of(augment_d4(images[b], a));
      o.require(table[a][b] >= 0, "D4 not closed");
    }
  }
  if (o.pass) {
    for (int a = 0; a < 8; ++a) {
      o.require(std::count(table[a], table[a] + 8, 0) == 1, "missing inverse");
      for (int b = 0; b < 8; ++b)
        for (int c = 0; c < 8; ++c)
          o.require(table[table[a][b]][c] == table[a][table[b][c]], "not associative");
    }
  }

  // ENVI: 3 interleaves x 4 sample types x 2 byte orders.
  TempDir dir("accept8");
  Rng vrng(88);
  int layouts = 0;
  for (auto il : {Interleave::BSQ, Interleave::BIL, Interleave::BIP}) {
    for (auto dt : {EnviDataType::Int16, EnviDataType::UInt16, EnviDataType::Float32, EnviDataType::Float64}) {
      for (auto bo : {ByteOrder::Little, ByteOrder::Big}) {
        HyperCube cube(3, 4, 5);
        cube.wavelengths = {450.5, 550.25, 650.125};
        for (auto& v : cube.data) {
          const double u = vrng.uniform();
          if (dt == EnviDataType::UInt16) v = std::floor(u * 60000.0f);
          else if (dt == EnviDataType::Int16) v = std::floor(u * 60000.0f) - 30000.0f;
          else v = static_cast<float>(u * 2.0 - 1.0) * 1e3f;
        }
        const auto hdr = dir / ("c" + std::to_string(layouts) + ".hdr");
        const auto dat = dir / ("c" + std::to_string(layouts) + ".dat");
        write_envi(cube, hdr, dat, EnviWriteOptions{il, dt, bo});
        o.require(load_envi(hdr, dat) == cube, "ENVI layout " + std::to_string(layouts) + " not lossless");
        ++layouts;
      }
    }
  }
  if (o.pass) o.detail = "1600/6904 split, D4 group laws, 24 ENVI layouts lossless";
  return o;
}

// ---- 9 -------------------------------------------------------------------

std::pair<std::vector<std::uint8_t>, std::string> pipeline_once(const std::filesystem::path& dir) {
  auto src_a = synth_source("a", 9, 3, 10, 10, 91);
  auto src_b = synth_source("b", 6, 4, 10, 10, 92);
  SynthConfig tc;
  tc.name = "target";
  tc.classes = 3;
  tc.bands = 7;
  tc.height = 12;
  tc.width = 12;
  tc.seed = 93;
  DomainDataset tgt = synth_generate(tc);
  Rng split_rng(94);
  auto [tr, te] = split_per_class(tgt, 5, split_rng);
  tgt.train_idx = tr;
  tgt.test_idx = te;
  normalize_bands(tgt);

  Rng rng(9);
  auto pre = build_cross_domain<float>(CrossDomainSpec{{spec_for(src_a, 8), spec_for(src_b, 8)}}, rng);
  const DomainDataset* ptrs[] = {&src_a, &src_b};
  TrainOptions opt;
  opt.eval_every = 10;
  TrainMetrics m = train_cross_domain(pre, ptrs, schedule(0.01, 20, 30, 8), rng, opt);
  auto net = transfer_shared(pre, spec_for(tgt, 8), rng);
  m.append(train_single(net, tgt, schedule(0.01, 20, 30, 8), rng, opt));
  save_checkpoint(net, TrainingState{30, rng.state()}, dir / "net.ckpt");
  std::ostringstream csv;
  m.write_csv(csv);

  // The experiment driver, threaded.
  auto cfg = parse_experiment_config(R"({
    "experiment": "schedule_sweep", "seeds": [1, 2],
    "network": {"filters": 4, "patch": 3, "residual_modules": 2},
    "domains": {"t": {"synth": {"classes": 3, "bands": 6, "height": 10, "width": 10, "seed": 1}},
                "s": {"synth": {"classes": 3, "bands": 8, "height": 8, "width": 8, "seed": 2}}},
    "target": "t", "train_per_class": 4, "eval_every": 5,
    "pretrain": {"sources": ["s"], "schedule": {"base_lr": 0.01, "step_size": 8, "max_iter": 10, "batch": 4}},
    "finetune": {"base_lr": 0.01, "step_size": 8, "max_iter": 10, "batch": 4},
    "schedules": [{"label": "8/10"}]})");
  RunOptions ro;
  ro.threads = 2;
  write_report(run_experiment(cfg, ro), dir);
  const auto report = read_file_bytes(dir / "report.csv");
  return {read_file_bytes(dir / "net.ckpt"), csv.str() + std::string(report.begin(), report.end())};
}

Outcome determinism() {
  Outcome o;
  TempDir a("accept9a"), b("accept9b");
  const auto first = pipeline_once(a.path());
  const auto second = pipeline_once(b.path());
  o.require(first.first == second.first, "checkpoints differ");
  o.require(first.second == second.second, "CSV differs");
  if (o.pass)
    o.detail = "checkpoint (" + std::to_string(first.first.size()) + " bytes) and CSV identical across runs";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradcheck", gradcheck},
      {"depth law and parameter count", depth_and_params},
      {"cross-domain sharing", sharing},
      {"transfer", transfer},
      {"overfit", overfit},
      {"convergence trend", convergence_trend},
      {"two-step training", two_step},
      {"data pipeline", data_pipeline},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("criterion 10 real data: SKIP (not part of CI)\n");
  return failed == 0 ? 0 : 1;
}
