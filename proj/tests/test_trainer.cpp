#include <doctest.h>

#include <fstream>
#include <sstream>

#include "mscd/parallel.hpp"
#include "mscd/trainer.hpp"
#include "oracles.hpp"

using namespace mscd;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.phase1_epochs = 1;
  cfg.iterations = 6;
  cfg.batch = 8;
  cfg.patch_rows = cfg.patch_cols = 8;
  cfg.stride = 8;
  cfg.width = 4;
  cfg.projection_layers = 2;
  cfg.seed = 3;
  return cfg;
}

struct Scene {
  Raster x1, z2;
};

Scene tiny_scene(Index size = 16) {
  const auto pair = prepare_pair(oracle::random_raster(size, size, 3, 1), oracle::random_raster(size, size, 1, 2));
  return {pair.optical, pair.sar};
}

std::vector<TensorF> params_of(const ConvStack& s) {
  std::vector<TensorF> out;
  for (const auto& p : s.params()) out.push_back(p.value);
  return out;
}

}  // namespace

TEST_CASE("patch grid: Las Vegas scene gives 504 anchors") {
  const auto anchors = extract_patches(824, 716, 64, 64, 32);
  CHECK(anchors.size() == 504);
  CHECK(anchors.size() == static_cast<std::size_t>(((824 - 64) / 32 + 1) * ((716 - 64) / 32 + 1)));
  CHECK(anchors.front() == PatchAnchor{0, 0});
  CHECK(anchors.back() == PatchAnchor{736, 640});
}

TEST_CASE("patch grid: edge cases against enumeration") {
  CHECK(extract_patches(64, 64, 64, 64, 32).size() == 1);
  const auto four = extract_patches(100, 100, 64, 64, 32);
  CHECK(four == PatchIndex{{0, 0}, {0, 32}, {32, 0}, {32, 32}});
  for (Index rows : {64, 65, 95, 96, 97, 130}) {
    for (Index stride : {1, 7, 32}) {
      PatchIndex brute;
      for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < 70; ++c)
          if (r % stride == 0 && c % stride == 0 && r + 64 <= rows && c + 64 <= 70) brute.push_back({r, c});
      CHECK(extract_patches(rows, 70, 64, 64, stride) == brute);
    }
  }
  CHECK_THROWS_AS(extract_patches(63, 100, 64, 64, 32), Error);
}

TEST_CASE("gather and permute keep positional pairing") {
  const Raster r = oracle::random_raster(10, 12, 2, 4);
  const PatchIndex anchors{{0, 0}, {2, 4}, {6, 8}};
  const auto t = gather_patches(r, anchors, 4, 4);
  CHECK(t.shape() == Shape{3, 2, 4, 4});
  CHECK(t.at(1, 1, 3, 2) == r.at(5, 6, 1));
  const std::vector<std::size_t> perm{2, 0, 1};
  const auto p = permute_batch(t, perm);
  CHECK(p.at(0, 0, 1, 1) == t.at(2, 0, 1, 1));
  CHECK_THROWS_AS(gather_patches(r, PatchIndex{{8, 0}}, 4, 4), Error);
}

TEST_CASE("schedule: phase 1 joint, then the three-way cycle") {
  const auto cfg = tiny_config();
  auto scene = tiny_scene(8);
  Rng rng = Rng::derive(cfg.seed, 0);
  auto model = build_model(cfg.arch(), rng);
  const auto result = train(model, scene.x1, scene.z2, cfg);
  std::vector<LossTag> tags;
  for (const auto& row : result.trace) tags.push_back(row.tag);
  using T = LossTag;
  CHECK(tags == std::vector<T>{T::Joint, T::Joint, T::Joint, T::Joint, T::Joint, T::Joint, T::Cluster1, T::Temporal,
                               T::Contrastive, T::Cluster1, T::Temporal, T::Contrastive});

  auto flags = cfg;
  flags.phase2_use_l2_mean = true;
  CHECK(scheduled_loss(flags, 2, 4) == LossTag::Cluster12Mean);
  flags.phase2_use_l2_mean = false;
  flags.phase2_aggregate_sum = true;
  CHECK(scheduled_loss(flags, 2, 2) == LossTag::Aggregate);
  CHECK(scheduled_loss(flags, 1, 2) == LossTag::Joint);
}

TEST_CASE("trace length is batches times J per epoch; last batch is kept") {
  auto cfg = tiny_config();
  cfg.batch = 3;  // 4 anchors -> batches of 3 and 1
  cfg.iterations = 2;
  auto scene = tiny_scene(16);
  Rng rng(0);
  auto model = build_model(cfg.arch(), rng);
  const auto result = train(model, scene.x1, scene.z2, cfg);
  CHECK(result.trace.size() == 2 * 2 * 2);
  CHECK(result.trace.back().iteration == 8);
  CHECK(result.cluster_usage.size() == 2);
  std::int64_t pixels = 0;
  for (auto u : result.cluster_usage[0]) pixels += u;
  CHECK(pixels == 4 * 64);
}

TEST_CASE("joint step moves everything; L1 step leaves f_sar untouched; L12 moves both projections") {
  const auto cfg = tiny_config();
  auto scene = tiny_scene(16);
  Rng rng(1);
  auto model = build_model(cfg.arch(), rng);
  Trainer trainer(model, scene.x1, scene.z2, cfg);
  const auto x = gather_patches(scene.x1, trainer.anchors(), 8, 8);
  const auto z = gather_patches(scene.z2, trainer.anchors(), 8, 8);

  auto opt0 = params_of(model.f_opt()), sar0 = params_of(model.f_sar()), head0 = params_of(model.head());
  trainer.step(x, z, z, LossTag::Joint);
  CHECK_FALSE(params_of(model.f_opt()) == opt0);
  CHECK_FALSE(params_of(model.f_sar()) == sar0);
  CHECK_FALSE(params_of(model.head()) == head0);

  opt0 = params_of(model.f_opt());
  sar0 = params_of(model.f_sar());
  head0 = params_of(model.head());
  trainer.step(x, z, z, LossTag::Cluster1);
  CHECK(params_of(model.f_sar()) == sar0);
  CHECK_FALSE(params_of(model.f_opt()) == opt0);
  CHECK_FALSE(params_of(model.head()) == head0);

  opt0 = params_of(model.f_opt());
  sar0 = params_of(model.f_sar());
  trainer.step(x, z, z, LossTag::Temporal);
  CHECK_FALSE(params_of(model.f_sar()) == sar0);
  CHECK_FALSE(params_of(model.f_opt()) == opt0);
}

TEST_CASE("same seed gives the same trace and weights") {
  const auto cfg = tiny_config();
  auto scene = tiny_scene(16);
  auto run = [&]() {
    Rng rng = Rng::derive(cfg.seed, 0);
    auto model = build_model(cfg.arch(), rng);
    auto result = train(model, scene.x1, scene.z2, cfg);
    return std::make_pair(params_of(model.f_opt()), result.trace.back().value);
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("worker count does not change the trained weights") {
  const auto cfg = tiny_config();
  auto scene = tiny_scene(16);
  auto run = [&](int workers) {
    set_worker_count(workers);
    Rng rng = Rng::derive(cfg.seed, 0);
    auto model = build_model(cfg.arch(), rng);
    train(model, scene.x1, scene.z2, cfg);
    set_worker_count(1);
    return std::make_pair(params_of(model.f_opt()), params_of(model.f_sar()));
  };
  const auto one = run(1);
  CHECK(run(1) == one);
  CHECK(run(3) == one);
}

TEST_CASE("config parsing") {
  const auto cfg = parse_train_config("# comment\nI = 3\nI1=1\n\nJ = 7\npatch = 32 48\nlr = 0.01\n"
                                      "shared_projections = true\n");
  CHECK(cfg.epochs == 3);
  CHECK(cfg.phase2_epochs() == 2);
  CHECK(cfg.iterations == 7);
  CHECK(cfg.patch_rows == 32);
  CHECK(cfg.patch_cols == 48);
  CHECK(cfg.lr == doctest::Approx(0.01f));
  CHECK(cfg.shared_projections);
  CHECK_NOTHROW(parse_train_config("I = 5\nI1 = 1\nI2 = 4\n"));
  CHECK_THROWS_AS(parse_train_config("I = 5\nI1 = 1\nI2 = 3\n"), Error);
  CHECK_THROWS_AS(parse_train_config("bogus = 1\n"), Error);
  CHECK_THROWS_AS(parse_train_config("J = x\n"), Error);
  CHECK_THROWS_AS(parse_train_config("J 5\n"), Error);

  const TrainConfig defaults;
  CHECK(defaults.epochs == 5);
  CHECK(defaults.phase1_epochs == 1);
  CHECK(defaults.iterations == 50);
  CHECK(defaults.clusters == 4);
  CHECK(defaults.lr == 0.001f);
  const auto echoed = parse_train_config(cfg.to_text());
  CHECK(echoed.to_text() == cfg.to_text());

  TrainConfig bad;
  bad.phase1_epochs = 6;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("trace CSV has one row per step") {
  oracle::TempDir dir("trace");
  std::vector<TraceRow> rows(2);
  rows[0] = {1, 1, LossTag::Joint, 1.5, 1.0, 2.0, 0.5, kNotComputed};
  rows[1] = {2, 2, LossTag::Cluster1, 0.75, 0.75, kNotComputed, kNotComputed, kNotComputed};
  write_trace_csv(rows, dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "epoch,iteration,tag,value,L1,L2,L12,L12c\n1,1,L1+L2,1.5,1,2,0.5,\n2,2,L1,0.75,0.75,,,\n");
}
