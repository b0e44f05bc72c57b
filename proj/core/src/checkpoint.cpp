#include "hsicnn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "hsicnn/spec_io.hpp"

namespace hsicnn {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'I', 'C', 'N', 'N', 'C', 'K'};
constexpr std::uint8_t kFloat32 = 1;
constexpr std::uint8_t kBytes = 2;
constexpr std::uint8_t kInt64 = 3;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint64_t offset() const { return off_; }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> take(std::uint64_t n) {
    if (n > b_.size() - off_) {
      throw ParseError("checkpoint truncated: need " + std::to_string(n) + " bytes, " +
                           std::to_string(b_.size() - off_) + " left",
                       off_);
    }
    auto s = b_.subspan(off_, n);
    off_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::uint64_t off_ = 0;
};

struct Record {
  std::uint8_t dtype = 0;
  std::vector<std::uint64_t> dims;
  std::vector<std::uint8_t> payload;
  std::uint64_t offset = 0;
};

class RecordList {
 public:
  void add_floats(const std::string& name, std::vector<std::uint64_t> dims,
                  std::span<const float> data) {
    Record r;
    r.dtype = kFloat32;
    r.dims = std::move(dims);
    r.payload.reserve(data.size() * 4);
    for (float f : data) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) r.payload.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    records_.emplace_back(name, std::move(r));
  }
  void add_bytes(const std::string& name, const std::string& s) {
    Record r;
    r.dtype = kBytes;
    r.dims = {s.size()};
    r.payload.assign(s.begin(), s.end());
    records_.emplace_back(name, std::move(r));
  }
  void add_int(const std::string& name, std::int64_t v) {
    Record r;
    r.dtype = kInt64;
    r.dims = {1};
    const auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) r.payload.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    records_.emplace_back(name, std::move(r));
  }

  void write_body(Writer& w) const {
    for (const auto& [name, r] : records_) {
      w.u32(static_cast<std::uint32_t>(name.size()));
      w.raw(name.data(), name.size());
      w.u8(r.dtype);
      w.u8(static_cast<std::uint8_t>(r.dims.size()));
      for (auto d : r.dims) w.u64(d);
      w.u64(r.payload.size());
      w.raw(r.payload.data(), r.payload.size());
    }
  }

  std::vector<std::uint8_t> finish() const {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(records_.size()));
    write_body(w);
    const auto crc = ::crc32(0L, w.bytes().data(), static_cast<uInt>(w.bytes().size()));
    w.u32(static_cast<std::uint32_t>(crc));
    return std::move(w.bytes());
  }

 private:
  std::vector<std::pair<std::string, Record>> records_;
};

std::vector<std::uint64_t> dims_of(const Shape4& s) { return {s.n, s.c, s.h, s.w}; }

std::string bn_name(const BatchNormParams<float>& bn) {
  const std::string& s = bn.scale.name;
  return s.substr(0, s.size() - std::string(".scale").size());
}

void add_param(RecordList& rl, const std::string& prefix, const Param<float>& p) {
  rl.add_floats(prefix + p.name, dims_of(p.value.shape()), p.value.span());
  rl.add_floats(prefix + p.name + "@velocity", dims_of(p.velocity.shape()), p.velocity.span());
}

void add_bn_state(RecordList& rl, const std::string& prefix, const BatchNormParams<float>& bn) {
  rl.add_floats(prefix + bn_name(bn) + ".running_mean", {bn.running_mean.size()}, bn.running_mean);
  rl.add_floats(prefix + bn_name(bn) + ".running_var", {bn.running_var.size()}, bn.running_var);
}

bool is_shared_bn(const BatchNormParams<float>& bn) { return bn.scale.shared; }

void add_network(RecordList& rl, const Network<float>& net, const std::string& prefix,
                 bool include_shared, bool include_private) {
  for (const Param<float>* p : net.parameters()) {
    if (p->shared ? include_shared : include_private) add_param(rl, prefix, *p);
  }
  for (const BatchNormParams<float>* bn : net.batchnorms()) {
    if (is_shared_bn(*bn) ? include_shared : include_private) add_bn_state(rl, prefix, *bn);
  }
}

void add_state(RecordList& rl, const TrainingState& st) {
  rl.add_int("iteration", st.iteration);
  rl.add_bytes("rng", st.rng_state);
}

using RecordMap = std::map<std::string, Record>;

RecordMap parse_records(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) {
    throw ParseError("not a checkpoint file (bad magic)", 0);
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  RecordMap records;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t start = r.offset();
    const std::uint32_t name_len = r.u32();
    auto name_bytes = r.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    Record rec;
    rec.offset = start;
    rec.dtype = r.u8();
    if (rec.dtype != kFloat32 && rec.dtype != kBytes && rec.dtype != kInt64) {
      throw ParseError("record '" + name + "' has unknown dtype " + std::to_string(rec.dtype),
                       r.offset() - 1);
    }
    const std::uint8_t ndim = r.u8();
    for (std::uint8_t d = 0; d < ndim; ++d) rec.dims.push_back(r.u64());
    const std::uint64_t len = r.u64();
    auto payload = r.take(len);
    rec.payload.assign(payload.begin(), payload.end());
    records.emplace(std::move(name), std::move(rec));
  }
  const std::uint64_t body_end = r.offset();
  const std::uint32_t stored = r.u32();
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(body_end)));
  if (crc != stored) throw ParseError("checkpoint CRC mismatch", body_end);
  if (r.offset() != bytes.size()) {
    throw ParseError("trailing bytes after checkpoint trailer", r.offset());
  }
  return records;
}

const Record& need(const RecordMap& m, const std::string& name, std::uint8_t dtype) {
  auto it = m.find(name);
  if (it == m.end()) throw ParseError("checkpoint is missing record '" + name + "'");
  if (it->second.dtype != dtype) {
    throw ParseError("record '" + name + "' has unexpected dtype", it->second.offset);
  }
  return it->second;
}

std::string read_string(const RecordMap& m, const std::string& name) {
  const Record& r = need(m, name, kBytes);
  return std::string(r.payload.begin(), r.payload.end());
}

void read_floats(const RecordMap& m, const std::string& name, std::span<float> out) {
  const Record& r = need(m, name, kFloat32);
  if (r.payload.size() != out.size() * 4) {
    throw ParseError("record '" + name + "' holds " + std::to_string(r.payload.size() / 4) +
                         " values, expected " + std::to_string(out.size()),
                     r.offset);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(r.payload[4 * i + k]) << (8 * k);
    out[i] = std::bit_cast<float>(bits);
  }
}

void read_state(const RecordMap& m, TrainingState* st) {
  if (!st) return;
  const Record& it = need(m, "iteration", kInt64);
  if (it.payload.size() != 8) throw ParseError("record 'iteration' malformed", it.offset);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(it.payload[i]) << (8 * i);
  st->iteration = static_cast<std::int64_t>(u);
  st->rng_state = read_string(m, "rng");
}

void read_network(const RecordMap& m, Network<float>& net, const std::string& prefix,
                  bool include_shared, bool include_private) {
  for (Param<float>* p : net.parameters()) {
    if (!(p->shared ? include_shared : include_private)) continue;
    read_floats(m, prefix + p->name, p->value.span());
    read_floats(m, prefix + p->name + "@velocity", p->velocity.span());
    p->zero_grad();
  }
  for (BatchNormParams<float>* bn : net.batchnorms()) {
    if (!(is_shared_bn(*bn) ? include_shared : include_private)) continue;
    read_floats(m, prefix + bn_name(*bn) + ".running_mean", bn->running_mean);
    read_floats(m, prefix + bn_name(*bn) + ".running_var", bn->running_var);
  }
}

void write_file(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::uint8_t> serialize_checkpoint(const Network<float>& net, const TrainingState& state) {
  RecordList rl;
  rl.add_bytes("kind", "network");
  rl.add_bytes("spec", to_json(net.spec()));
  add_state(rl, state);
  add_network(rl, net, "", true, true);
  return rl.finish();
}

std::vector<std::uint8_t> serialize_checkpoint(const CrossDomainNetwork<float>& net,
                                               const TrainingState& state) {
  RecordList rl;
  rl.add_bytes("kind", "cross_domain");
  rl.add_bytes("spec", to_json(net.spec()));
  add_state(rl, state);
  for (std::size_t b = 0; b < net.size(); ++b) {
    add_network(rl, net.branch(b), "branch" + std::to_string(b) + "/", false, true);
  }
  add_network(rl, net.branch(0), "shared/", true, false);
  return rl.finish();
}

void save_checkpoint(const Network<float>& net, const TrainingState& state,
                     const std::filesystem::path& path) {
  write_file(serialize_checkpoint(net, state), path);
}

void save_checkpoint(const CrossDomainNetwork<float>& net, const TrainingState& state,
                     const std::filesystem::path& path) {
  write_file(serialize_checkpoint(net, state), path);
}

CheckpointKind checkpoint_kind(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const RecordMap m = parse_records(bytes);
  const std::string kind = read_string(m, "kind");
  if (kind == "network") return CheckpointKind::Network;
  if (kind == "cross_domain") return CheckpointKind::CrossDomain;
  throw ParseError("unknown checkpoint kind '" + kind + "'");
}

Network<float> parse_network(std::span<const std::uint8_t> bytes, TrainingState* state) {
  const RecordMap m = parse_records(bytes);
  if (read_string(m, "kind") != "network") {
    throw DataError("checkpoint does not hold a single network");
  }
  const NetworkSpec spec = network_spec_from_json(read_string(m, "spec"));
  Rng scratch(0);
  Network<float> net = build_backbone<float>(spec, scratch);
  read_network(m, net, "", true, true);
  read_state(m, state);
  return net;
}

CrossDomainNetwork<float> parse_cross_domain(std::span<const std::uint8_t> bytes,
                                             TrainingState* state) {
  const RecordMap m = parse_records(bytes);
  if (read_string(m, "kind") != "cross_domain") {
    throw DataError("checkpoint does not hold a cross-domain network");
  }
  const CrossDomainSpec spec = cross_domain_spec_from_json(read_string(m, "spec"));
  Rng scratch(0);
  CrossDomainNetwork<float> net = build_cross_domain<float>(spec, scratch);
  for (std::size_t b = 0; b < net.size(); ++b) {
    read_network(m, net.branch(b), "branch" + std::to_string(b) + "/", false, true);
  }
  read_network(m, net.branch(0), "shared/", true, false);
  read_state(m, state);
  return net;
}

Network<float> load_network(const std::filesystem::path& path, TrainingState* state) {
  return parse_network(read_file_bytes(path), state);
}

CrossDomainNetwork<float> load_cross_domain(const std::filesystem::path& path,
                                            TrainingState* state) {
  return parse_cross_domain(read_file_bytes(path), state);
}

std::vector<std::uint8_t> serialize_parameters(std::span<const Param<float>* const> params) {
  RecordList rl;
  for (const Param<float>* p : params) {
    rl.add_floats(p->name, dims_of(p->value.shape()), p->value.span());
  }
  Writer w;
  rl.write_body(w);
  return std::move(w.bytes());
}

}  // namespace hsicnn
