#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "entprog/checkpoint.hpp"
#include "entprog/errors.hpp"
#include "support.hpp"

using namespace entprog;
using entprog::testing::random_input;
using entprog::testing::random_matrix;
using entprog::testing::TempDir;
using entprog::testing::tiny_denoiser;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void expect_params_equal(const DenoiserParams& a, const DenoiserParams& b) {
  std::vector<Matrix> ta, tb;
  a.for_each([&](const std::string&, int, const Matrix& t) { ta.push_back(t); });
  b.for_each([&](const std::string&, int, const Matrix& t) { tb.push_back(t); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i], tb[i]) << i;
}

}  // namespace

TEST(Checkpoint, FileRoundTrip) {
  TempDir dir("ckpt");
  Rng rng(4);
  Checkpoint c;
  c.meta["note"] = "x";
  c.meta["n"] = 3;
  c.tensors["a"] = random_matrix(3, 2, rng);
  c.tensors["b"] = random_matrix(1, 5, rng);
  c.save(dir / "c.ckpt");
  const auto d = Checkpoint::load(dir / "c.ckpt");
  EXPECT_EQ(d.meta, c.meta);
  ASSERT_EQ(d.tensors.size(), 2u);
  EXPECT_EQ(d.tensors.at("a"), c.tensors.at("a"));
  EXPECT_EQ(d.tensors.at("b"), c.tensors.at("b"));
  d.save(dir / "d.ckpt");
  EXPECT_EQ(slurp(dir / "c.ckpt"), slurp(dir / "d.ckpt"));
}

TEST(Checkpoint, ModelRoundTripIsBitwise) {
  BlockwiseDenoiser model(tiny_denoiser(5), 12);
  Checkpoint c;
  store_model(c, model);
  const auto back = restore_model(c);
  EXPECT_EQ(back.config().num_blocks, 5);
  expect_params_equal(model.params(), back.params());
  Rng rng(1);
  const auto in = random_input(model.config(), 4, rng);
  EXPECT_EQ(model.forward(in), back.forward(in));
  EXPECT_EQ(model.params().digest(), back.params().digest());
}

TEST(Checkpoint, OptimizerRoundTrip) {
  BlockwiseDenoiser model(tiny_denoiser(), 2);
  OptimizerConfig oc;
  oc.kind = OptimizerKind::kAdam;
  oc.learning_rate = 0.01;
  Optimizer opt(oc, model.params());
  Rng rng(3);
  const auto in = random_input(model.config(), 6, rng);
  const Matrix eps = random_matrix(6, 6, rng);
  DenoiserParams g = DenoiserParams::zeros_like(model.params());
  model.apply_freeze_mask({BlockSet{1, 2}, false});
  model.loss_and_gradients(in, eps, g);
  opt.step(model.params(), g, model.freeze_mask());
  Checkpoint c;
  store_model(c, model);
  store_optimizer(c, opt);
  TempDir dir("ckpt-opt");
  c.save(dir / "o.ckpt");
  const auto loaded = Checkpoint::load(dir / "o.ckpt");
  auto opt2 = restore_optimizer(loaded, model.params());
  EXPECT_EQ(opt2.config().kind, OptimizerKind::kAdam);
  EXPECT_EQ(opt2.config().learning_rate, 0.01);
  EXPECT_EQ(opt2.step_counts(), opt.step_counts());
  expect_params_equal(opt2.first_moment(), opt.first_moment());
  expect_params_equal(opt2.second_moment(), opt.second_moment());

  // Same next update from both.
  auto m1 = restore_model(loaded), m2 = restore_model(loaded);
  opt.step(m1.params(), g, FreezeMask::full(4));
  opt2.step(m2.params(), g, FreezeMask::full(4));
  expect_params_equal(m1.params(), m2.params());
}

TEST(Checkpoint, Errors) {
  TempDir dir("ckpt-bad");
  EXPECT_THROW(Checkpoint::load(dir / "missing.ckpt"), InputError);
  {
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
  }
  EXPECT_THROW(Checkpoint::load(dir / "junk.ckpt"), InputError);

  BlockwiseDenoiser model(tiny_denoiser(), 2);
  Checkpoint c;
  store_model(c, model);
  c.save(dir / "full.ckpt");
  const std::string bytes = slurp(dir / "full.ckpt");
  {
    std::ofstream out(dir / "cut.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  EXPECT_THROW(Checkpoint::load(dir / "cut.ckpt"), InputError);

  Checkpoint empty;
  EXPECT_THROW(restore_model(empty), InputError);
  EXPECT_THROW(restore_optimizer(c, model.params()), InputError);
  auto missing = c;
  missing.tensors.erase("block.0.w_in");
  EXPECT_THROW(restore_model(missing), InputError);
  auto reshaped = c;
  reshaped.tensors["block.0.w_in"] = Matrix::Zero(1, 1);
  EXPECT_THROW(restore_model(reshaped), InputError);
}
