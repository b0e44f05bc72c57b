#include "hsicnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>

#include "json.hpp"

namespace hsicnn {

namespace {

constexpr std::size_t kEvalChunk = 256;

struct DomainSlot {
  Network<float>* net;
  const DomainDataset* ds;
  std::size_t branch;
};

void check_domain(const Network<float>& net, const DomainDataset& ds) {
  if (ds.train_idx.empty()) throw DataError(ds.name + ": empty train split");
  if (net.spec().bands != ds.cube.bands) {
    throw DataError(ds.name + ": network expects " + std::to_string(net.spec().bands) +
                    " bands, dataset has " + std::to_string(ds.cube.bands));
  }
  if (net.spec().classes < ds.classes) {
    throw DataError(ds.name + ": network has " + std::to_string(net.spec().classes) +
                    " outputs for " + std::to_string(ds.classes) + " classes");
  }
}

TrainMetrics run_loop(const std::vector<DomainSlot>& slots, const TrainSchedule& s,
                      double shared_multiplier, Rng& rng, const TrainOptions& opt) {
  s.validate();
  for (const auto& d : slots) check_domain(*d.net, *d.ds);
  const std::int64_t stop = opt.stop_iter < 0 ? s.max_iter : std::min(opt.stop_iter, s.max_iter);
  const std::int64_t eval_every = std::max<std::int64_t>(1, opt.eval_every);

  TrainMetrics metrics;
  std::vector<Accum> loss_sum(slots.size(), 0.0);
  std::int64_t window = 0;
  auto clock_start = std::chrono::steady_clock::now();

  for (std::int64_t it = opt.start_iter; it < stop; ++it) {
    const double lr = lr_at(s, it);
    const double shared_lr = lr * shared_multiplier;
    for (std::size_t d = 0; d < slots.size(); ++d) {
      Network<float>& net = *slots[d].net;
      const DomainDataset& ds = *slots[d].ds;
      net.zero_grad();
      Batch b = sample_batch(ds, s.batch, net.spec().patch, opt.augment, rng);
      ForwardTape<float> tape;
      const Tensor4<float> logits = net.forward(b.input, Mode::Train, rng, &tape);
      LossResult<float> loss = softmax_cross_entropy(logits, b.labels);
      if (!std::isfinite(loss.loss)) {
        throw NumericError(ds.name + ": non-finite loss at iteration " + std::to_string(it));
      }
      net.backward(tape, loss.grad);
      for (Param<float>* p : net.parameters()) {
        sgd_step(*p, SgdConfig{p->shared ? shared_lr : lr, s.momentum, s.weight_decay}, it);
      }
      loss_sum[d] += loss.loss;
      if (opt.on_step) opt.on_step(StepEvent{opt.phase, it, slots[d].branch, lr, shared_lr, loss.loss});
    }
    ++window;

    const std::int64_t done = it + 1;
    if (done % 100 == 0) {
      const auto now = std::chrono::steady_clock::now();
      metrics.seconds_per_100.push_back(std::chrono::duration<double>(now - clock_start).count());
      clock_start = now;
    }
    if (done % eval_every == 0 || done == stop) {
      std::string line = opt.phase + " iter " + std::to_string(done) + "/" + std::to_string(s.max_iter);
      for (std::size_t d = 0; d < slots.size(); ++d) {
        const DomainDataset& ds = *slots[d].ds;
        MetricRecord rec;
        rec.iteration = done;
        rec.domain = ds.name;
        rec.loss = loss_sum[d] / static_cast<double>(window);
        rec.accuracy = std::numeric_limits<double>::quiet_NaN();
        if (opt.evaluate_test && !ds.test_idx.empty()) {
          rec.accuracy = evaluate(*slots[d].net, ds, Split::Test);
        }
        line += " " + ds.name + " loss=" + format_number(rec.loss);
        if (!std::isnan(rec.accuracy)) line += " acc=" + format_number(rec.accuracy);
        metrics.records.push_back(std::move(rec));
        loss_sum[d] = 0;
      }
      window = 0;
      if (opt.progress) opt.progress(line);
    }
  }
  return metrics;
}

}  // namespace

void TrainSchedule::validate() const {
  if (!(gamma > 0 && gamma < 1)) throw ConfigError("schedule: gamma must be in (0, 1)");
  if (step_size < 1) throw ConfigError("schedule: step_size must be >= 1");
  if (max_iter < 1) throw ConfigError("schedule: max_iter must be >= 1");
  if (step_size > max_iter) throw ConfigError("schedule: step_size must not exceed max_iter");
  if (batch < 1) throw ConfigError("schedule: batch must be >= 1");
  if (!(base_lr >= 0)) throw ConfigError("schedule: base_lr must be >= 0");
}

double lr_at(const TrainSchedule& s, std::int64_t iter) {
  const std::int64_t drops = iter / s.step_size;
  double lr = s.base_lr;
  for (std::int64_t i = 0; i < drops; ++i) lr *= s.gamma;
  return lr;
}

void TrainMetrics::append(const TrainMetrics& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
  seconds_per_100.insert(seconds_per_100.end(), other.seconds_per_100.begin(),
                         other.seconds_per_100.end());
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void TrainMetrics::write_csv(std::ostream& out) const {
  out << "iteration,domain,loss,accuracy\n";
  for (const auto& r : records) {
    out << r.iteration << "," << r.domain << "," << format_number(r.loss) << ","
        << (std::isnan(r.accuracy) ? "" : format_number(r.accuracy)) << "\n";
  }
}

std::string TrainMetrics::summary_json() const {
  nlohmann::ordered_json j;
  std::map<std::string, const MetricRecord*> last;
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (!last.count(r.domain)) order.push_back(r.domain);
    last[r.domain] = &r;
  }
  nlohmann::ordered_json domains = nlohmann::ordered_json::object();
  for (const auto& name : order) {
    const MetricRecord* r = last[name];
    nlohmann::ordered_json d{{"iteration", r->iteration}, {"loss", r->loss}};
    if (!std::isnan(r->accuracy)) d["accuracy"] = r->accuracy;
    domains[name] = d;
  }
  j["final"] = domains;
  j["records"] = records.size();
  return j.dump(2);
}

Batch sample_batch(const DomainDataset& ds, std::size_t size, std::size_t patch, bool augment,
                   Rng& rng) {
  if (ds.train_idx.empty()) throw DataError(ds.name + ": empty train split");
  Batch b;
  b.input = Tensor4<float>(size, ds.cube.bands, patch, patch);
  b.labels.resize(size);
  for (std::size_t n = 0; n < size; ++n) {
    const std::size_t px = ds.train_idx[rng.below(ds.train_idx.size())];
    extract_patch_into(ds.cube, px, b.input, n);
    if (augment) augment_d4_inplace(b.input, n, static_cast<int>(rng.below(8)));
    b.labels[n] = ds.class_of(px);
  }
  return b;
}

Batch gather_batch(const DomainDataset& ds, std::span<const std::size_t> pixels, std::size_t patch) {
  Batch b;
  b.input = Tensor4<float>(pixels.size(), ds.cube.bands, patch, patch);
  b.labels.resize(pixels.size());
  for (std::size_t n = 0; n < pixels.size(); ++n) {
    extract_patch_into(ds.cube, pixels[n], b.input, n);
    b.labels[n] = ds.class_of(pixels[n]);
  }
  return b;
}

std::vector<int> predict_pixels(const Network<float>& net, const DomainDataset& ds,
                                std::span<const std::size_t> pixels) {
  std::vector<int> out;
  out.reserve(pixels.size());
  for (std::size_t start = 0; start < pixels.size(); start += kEvalChunk) {
    const auto chunk = pixels.subspan(start, std::min(kEvalChunk, pixels.size() - start));
    const Batch b = gather_batch(ds, chunk, net.spec().patch);
    const Tensor4<float> logits = net.predict(b.input);
    for (std::size_t n = 0; n < chunk.size(); ++n) {
      int best = 0;
      for (std::size_t k = 1; k < logits.c(); ++k) {
        if (logits(n, k, 0, 0) > logits(n, best, 0, 0)) best = static_cast<int>(k);
      }
      out.push_back(best);
    }
  }
  return out;
}

double evaluate(const Network<float>& net, const DomainDataset& ds, Split split) {
  const auto& idx = split == Split::Train ? ds.train_idx : ds.test_idx;
  if (idx.empty()) {
    throw DataError(ds.name + ": cannot evaluate an empty " +
                    std::string(split == Split::Train ? "train" : "test") + " split");
  }
  const std::vector<int> pred = predict_pixels(net, ds, idx);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == ds.class_of(idx[i]);
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

TrainMetrics train_single(Network<float>& net, const DomainDataset& ds, const TrainSchedule& s,
                          Rng& rng, const TrainOptions& opt) {
  return run_loop({DomainSlot{&net, &ds, 0}}, s, 1.0, rng, opt);
}

TrainMetrics train_cross_domain(CrossDomainNetwork<float>& net,
                                std::span<const DomainDataset* const> datasets,
                                const TrainSchedule& s, Rng& rng, const TrainOptions& opt) {
  if (datasets.size() != net.size()) {
    throw ConfigError("cross-domain training: " + std::to_string(datasets.size()) +
                      " datasets for " + std::to_string(net.size()) + " branches");
  }
  std::vector<DomainSlot> slots;
  for (std::size_t d = 0; d < datasets.size(); ++d) slots.push_back({&net.branch(d), datasets[d], d});
  return run_loop(slots, s, 1.0 / static_cast<double>(slots.size()), rng, opt);
}

std::size_t largest_dataset(std::span<const DomainDataset* const> datasets) {
  if (datasets.empty()) throw ConfigError("no datasets supplied");
  std::size_t best = 0, best_count = datasets[0]->labeled_count();
  for (std::size_t d = 1; d < datasets.size(); ++d) {
    const std::size_t c = datasets[d]->labeled_count();
    if (c > best_count) {
      best = d;
      best_count = c;
    }
  }
  return best;
}

TrainMetrics two_step_train(CrossDomainNetwork<float>& net,
                            std::span<const DomainDataset* const> datasets,
                            const TrainSchedule& step1, const TrainSchedule& step2, Rng& rng,
                            const TrainOptions& opt) {
  if (datasets.size() != net.size()) {
    throw ConfigError("two-step training: " + std::to_string(datasets.size()) + " datasets for " +
                      std::to_string(net.size()) + " branches");
  }
  const std::size_t largest = largest_dataset(datasets);

  TrainOptions o1 = opt;
  o1.phase = "step1";
  o1.start_iter = 0;
  o1.stop_iter = -1;
  TrainMetrics m = run_loop({DomainSlot{&net.branch(largest), datasets[largest], largest}}, step1,
                            1.0, rng, o1);
  for (auto& r : m.records) r.domain = "step1/" + r.domain;

  TrainOptions o2 = opt;
  o2.phase = "step2";
  o2.start_iter = 0;
  o2.stop_iter = -1;
  TrainMetrics m2 = train_cross_domain(net, datasets, step2, rng, o2);
  for (auto& r : m2.records) r.domain = "step2/" + r.domain;
  m.append(m2);
  return m;
}

}  // namespace hsicnn
