#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "hsicnn/checkpoint.hpp"
#include "hsicnn/data.hpp"
#include "hsicnn/trainer.hpp"
#include "test_util.hpp"

using namespace hsicnn;
using hsicnn::testing::TempDir;

namespace {

NetworkSpec small_spec(std::size_t bands, std::size_t classes) {
  NetworkSpec s;
  s.bands = bands;
  s.classes = classes;
  s.filters = 6;
  s.patch = 5;
  return s;
}

DomainDataset small_domain(std::uint64_t seed, std::size_t bands = 5) {
  SynthConfig c;
  c.name = "d" + std::to_string(seed);
  c.classes = 3;
  c.bands = bands;
  c.height = 12;
  c.width = 12;
  c.seed = seed;
  auto ds = synth_generate(c);
  Rng rng(seed);
  auto [tr, te] = split_per_class(ds, 5, rng);
  ds.train_idx = tr;
  ds.test_idx = te;
  normalize_bands(ds);
  return ds;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(1);
  auto net = build_backbone<float>(small_spec(4, 3), rng);
  for (auto* bn : net.batchnorms()) bn->running_mean[0] = 0.125f;
  net.parameters()[0]->velocity[1] = -0.5f;
  TrainingState st{123, rng.state()};
  TempDir dir("ckpt");
  save_checkpoint(net, st, dir / "a.ckpt");
  EXPECT_EQ(checkpoint_kind(dir / "a.ckpt"), CheckpointKind::Network);
  TrainingState st2;
  auto back = load_network(dir / "a.ckpt", &st2);
  EXPECT_EQ(st2, st);
  EXPECT_EQ(back.spec(), net.spec());
  auto pa = net.parameters();
  auto pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    EXPECT_EQ(pa[i]->velocity, pb[i]->velocity);
    EXPECT_EQ(pa[i]->decay, pb[i]->decay);
    EXPECT_EQ(pa[i]->shared, pb[i]->shared);
  }
  auto ba = net.batchnorms();
  auto bb = back.batchnorms();
  for (std::size_t i = 0; i < ba.size(); ++i) {
    EXPECT_EQ(ba[i]->running_mean, bb[i]->running_mean);
    EXPECT_EQ(ba[i]->running_var, bb[i]->running_var);
  }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Rng rng(2);
  auto net = build_backbone<float>(small_spec(3, 2), rng);
  TrainingState st{7, rng.state()};
  TempDir dir("ckpt");
  save_checkpoint(net, st, dir / "a.ckpt");
  TrainingState st2;
  auto back = load_network(dir / "a.ckpt", &st2);
  save_checkpoint(back, st2, dir / "b.ckpt");
  EXPECT_EQ(read_file_bytes(dir / "a.ckpt"), read_file_bytes(dir / "b.ckpt"));
}

TEST(Checkpoint, CrossDomainKeepsSharing) {
  Rng rng(3);
  auto cd = build_cross_domain<float>(CrossDomainSpec{{small_spec(3, 2), small_spec(7, 4)}}, rng);
  TempDir dir("ckpt");
  save_checkpoint(cd, TrainingState{5, rng.state()}, dir / "cd.ckpt");
  EXPECT_EQ(checkpoint_kind(dir / "cd.ckpt"), CheckpointKind::CrossDomain);
  auto back = load_cross_domain(dir / "cd.ckpt");
  EXPECT_EQ(back.spec(), cd.spec());
  EXPECT_EQ(back.branch(0).residual_ptr(1), back.branch(1).residual_ptr(1));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back.shared_module(k).first.conv.weight.value, cd.shared_module(k).first.conv.weight.value);
  }
  EXPECT_EQ(back.branch(1).c9().weight.value, cd.branch(1).c9().weight.value);
  EXPECT_EQ(serialize_checkpoint(back, TrainingState{5, rng.state()}),
            serialize_checkpoint(cd, TrainingState{5, rng.state()}));
  EXPECT_THROW(load_network(dir / "cd.ckpt"), DataError);
}

TEST(Checkpoint, TruncationRejectedWithOffset) {
  Rng rng(4);
  auto net = build_backbone<float>(small_spec(3, 2), rng);
  const auto bytes = serialize_checkpoint(net, TrainingState{});
  for (std::size_t len : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2,
                          bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(len));
    EXPECT_THROW(parse_network(cut), ParseError) << "length " << len;
  }
  try {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 40);
    parse_network(cut);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(Checkpoint, CorruptionRejected) {
  Rng rng(5);
  auto net = build_backbone<float>(small_spec(3, 2), rng);
  auto bytes = serialize_checkpoint(net, TrainingState{});
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_THROW(parse_network(bytes), ParseError);
  auto bad_magic = serialize_checkpoint(net, TrainingState{});
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_network(bad_magic), ParseError);
  auto trailing = serialize_checkpoint(net, TrainingState{});
  trailing.push_back(0);
  EXPECT_THROW(parse_network(trailing), ParseError);
}

TEST(Checkpoint, UnknownVersionRejected) {
  Rng rng(6);
  auto net = build_backbone<float>(small_spec(3, 2), rng);
  auto bytes = serialize_checkpoint(net, TrainingState{});
  bytes[8] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
  EXPECT_THROW(parse_network(bytes), VersionError);
  TempDir dir("ckpt");
  write_bytes(dir / "v.ckpt", bytes);
  EXPECT_THROW(load_network(dir / "v.ckpt"), VersionError);
}

TEST(Checkpoint, MissingFile) {
  TempDir dir("ckpt");
  EXPECT_THROW(load_network(dir / "none.ckpt"), DataError);
}

TEST(Checkpoint, ResumeMatchesUninterruptedTraining) {
  const auto ds = small_domain(11);
  TrainSchedule s;
  s.base_lr = 0.01;
  s.step_size = 150;
  s.max_iter = 200;
  s.batch = 8;

  Rng init(21);
  auto straight = build_backbone<float>(small_spec(5, 3), init);
  Rng init2(21);
  auto resumed = build_backbone<float>(small_spec(5, 3), init2);

  TrainOptions opt;
  opt.eval_every = 50;
  Rng r1(99);
  train_single(straight, ds, s, r1, opt);

  Rng r2(99);
  TrainOptions first = opt;
  first.stop_iter = 100;
  train_single(resumed, ds, s, r2, first);
  TempDir dir("ckpt");
  save_checkpoint(resumed, TrainingState{100, r2.state()}, dir / "mid.ckpt");

  TrainingState st;
  auto loaded = load_network(dir / "mid.ckpt", &st);
  Rng r3;
  r3.set_state(st.rng_state);
  TrainOptions second = opt;
  second.start_iter = st.iteration;
  train_single(loaded, ds, s, r3, second);

  EXPECT_EQ(serialize_checkpoint(loaded, TrainingState{200, r3.state()}),
            serialize_checkpoint(straight, TrainingState{200, r1.state()}));
}
