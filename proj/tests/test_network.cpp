#include <doctest.h>

#include <fstream>

#include "mscd/losses.hpp"
#include "mscd/network.hpp"
#include "mscd/rng.hpp"
#include "oracles.hpp"

using namespace mscd;

namespace {

std::vector<TensorF> snapshot(const ConvStack& stack) {
  std::vector<TensorF> out;
  for (const auto& p : stack.params()) out.push_back(p.value);
  return out;
}

bool all_grads_zero(const ConvStack& stack) {
  for (const auto& p : stack.params()) {
    if (!(p.value.grad() == 0.0f).all()) return false;
  }
  return true;
}

bool any_grad_nonzero(const ConvStack& stack) {
  for (const auto& p : stack.params()) {
    if ((p.value.grad() != 0.0f).any()) return true;
  }
  return false;
}

Arch small_arch() {
  Arch a;
  a.width = 8;
  a.projection_layers = 2;
  return a;
}

}  // namespace

TEST_CASE("default model has the hand-counted parameter total") {
  Rng rng(0);
  const auto model = build_model(Arch{}, rng);
  const std::size_t projection = (3 * 64 * 9 + 64) + 3 * (64 * 64 * 9 + 64) + 2 * 64 * 4;
  const std::size_t head = 64 * 4 + 4;
  CHECK(projection == 113088);
  CHECK(model.parameter_count() == 2 * projection + head);
  CHECK(model.parameter_count() == 226436);
  CHECK(model.head().layers().size() == 1);
  CHECK_FALSE(model.head().layers()[0].activated);
  CHECK(model.f_opt().layers().size() == 4);
}

TEST_CASE("forward keeps spatial size and emits K channels") {
  Rng rng(1);
  auto model = build_model(Arch{}, rng);
  const auto x = oracle::random_tensor({2, 3, 64, 64}, 2);
  CHECK(model.forward_opt(x, Mode::Train).shape() == Shape{2, 4, 64, 64});
  CHECK(model.forward_sar(x, Mode::Eval).shape() == Shape{2, 4, 64, 64});
  const auto odd = oracle::random_tensor({1, 3, 13, 7}, 3);
  CHECK(model.forward_opt(odd, Mode::Eval).shape() == Shape{1, 4, 13, 7});
  CHECK_THROWS_AS(model.forward_opt(oracle::random_tensor({1, 2, 8, 8}, 4), Mode::Eval), ShapeError);
}

TEST_CASE("whole Las Vegas sized scene runs in one pass") {
  Rng rng(1);
  auto model = build_model(small_arch(), rng);
  const TensorF x({1, 3, 824, 716}, 0.5f);
  CHECK(model.forward_opt(x, Mode::Eval).shape() == Shape{1, 4, 824, 716});
}

TEST_CASE("copied projection weights give identical branch outputs in eval mode") {
  Rng rng(5);
  auto model = build_model(small_arch(), rng);
  CHECK_FALSE(snapshot(model.f_opt()) == snapshot(model.f_sar()));
  for (std::size_t i = 0; i < model.f_opt().params().size(); ++i) {
    model.f_sar().params()[i].value.values() = model.f_opt().params()[i].value.values();
  }
  const auto x = oracle::random_tensor({2, 3, 9, 9}, 6);
  CHECK(model.forward_opt(x, Mode::Eval) == model.forward_sar(x, Mode::Eval));
}

TEST_CASE("same seed builds identical models") {
  Rng a(9), b(9), c(10);
  const auto m1 = build_model(Arch{}, a);
  const auto m2 = build_model(Arch{}, b);
  const auto m3 = build_model(Arch{}, c);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(snapshot(*m1.stacks()[s]) == snapshot(*m2.stacks()[s]));
    CHECK_FALSE(snapshot(*m1.stacks()[s]) == snapshot(*m3.stacks()[s]));
  }
}

TEST_CASE("shared projections use one storage") {
  Arch arch = small_arch();
  arch.shared_projections = true;
  Rng rng(2);
  auto model = build_model(arch, rng);
  CHECK(&model.f_opt() == &model.f_sar());
  CHECK(model.stacks().size() == 2);
  Rng rng2(2);
  CHECK(model.parameter_count() < build_model(small_arch(), rng2).parameter_count());
}

TEST_CASE("gradients reach only the branch the loss sees, plus the head") {
  Rng rng(3);
  auto model = build_model(small_arch(), rng);
  const auto x = oracle::random_tensor({2, 3, 8, 8}, 7);
  SiameseCDModel::BranchTape tape;
  const auto y = model.forward_opt(x, Mode::Train, &tape);
  model.backward_opt(tape, deep_cluster_loss(y).grad_a);
  CHECK(any_grad_nonzero(model.f_opt()));
  CHECK(any_grad_nonzero(model.head()));
  CHECK(all_grads_zero(model.f_sar()));

  model.zero_grad();
  const auto z = model.forward_sar(x, Mode::Train, &tape);
  model.backward_sar(tape, deep_cluster_loss(z).grad_a);
  CHECK(all_grads_zero(model.f_opt()));
  CHECK(any_grad_nonzero(model.f_sar()));
  CHECK(any_grad_nonzero(model.head()));
}

TEST_CASE("eval mode leaves batch-norm running statistics unchanged") {
  Rng rng(4);
  auto model = build_model(small_arch(), rng);
  const auto before = model.f_opt().running()[0].mean;
  model.forward_opt(oracle::random_tensor({1, 3, 8, 8}, 1), Mode::Eval);
  CHECK(model.f_opt().running()[0].mean == before);
  model.forward_opt(oracle::random_tensor({1, 3, 8, 8}, 1), Mode::Train);
  CHECK_FALSE(model.f_opt().running()[0].mean == before);
}

TEST_CASE("checkpoint round trip restores every tensor bitwise") {
  oracle::TempDir dir("ckpt");
  Rng rng(11);
  auto model = build_model(Arch{}, rng);
  model.forward_opt(oracle::random_tensor({1, 3, 8, 8}, 1), Mode::Train);  // move running stats
  save_checkpoint(model, dir / "m.ckpt");
  const auto back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.arch() == model.arch());
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(snapshot(*back.stacks()[s]) == snapshot(*model.stacks()[s]));
    for (std::size_t i = 0; i < model.stacks()[s]->running().size(); ++i) {
      CHECK(back.stacks()[s]->running()[i].mean == model.stacks()[s]->running()[i].mean);
      CHECK(back.stacks()[s]->running()[i].var == model.stacks()[s]->running()[i].var);
    }
  }
  save_checkpoint(back, dir / "again.ckpt");
  std::ifstream a(dir / "m.ckpt", std::ios::binary), b(dir / "again.ckpt", std::ios::binary);
  const std::string sa{std::istreambuf_iterator<char>(a), {}}, sb{std::istreambuf_iterator<char>(b), {}};
  CHECK(sa == sb);

  SUBCASE("corrupted files are rejected") {
    std::ofstream(dir / "t.ckpt", std::ios::binary) << sa.substr(0, sa.size() - 3);
    CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), FormatError);
    std::ofstream(dir / "x.ckpt", std::ios::binary) << sa << "junk";
    CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), FormatError);
    std::ofstream(dir / "m2.ckpt", std::ios::binary) << "MSCD2\n";
    CHECK_THROWS_AS(load_checkpoint(dir / "m2.ckpt"), FormatError);
  }
}

TEST_CASE("invalid architectures are rejected") {
  Rng rng(0);
  Arch a;
  a.clusters = 1;
  CHECK_THROWS_AS(build_model(a, rng), Error);
  a = Arch{};
  a.projection_layers = 0;
  CHECK_THROWS_AS(build_model(a, rng), Error);
  a = Arch{};
  a.head_layers = 2;
  const auto deep_head = build_model(a, rng);
  CHECK(deep_head.head().layers()[0].activated);
  CHECK_FALSE(deep_head.head().layers()[1].activated);
}
