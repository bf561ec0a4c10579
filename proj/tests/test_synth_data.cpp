#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "entprog/errors.hpp"
#include "entprog/synth_data.hpp"
#include "support.hpp"

using namespace entprog;
using entprog::testing::TempDir;

namespace {

double dist(const PoseCondition::Point& a, const PoseCondition::Point& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace

TEST(SampleCondition, DeterministicPerSeed) {
  EXPECT_EQ(sample_condition(42), sample_condition(42));
  EXPECT_NE(sample_condition(42), sample_condition(43));
}

TEST(SampleCondition, ThousandDrawsInsideUnitSquareAndLimbLimits) {
  using L = SkeletonLimits;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto c = sample_condition(s);
    for (const auto& p : c.keypoints) {
      EXPECT_GE(p[0], 0.0);
      EXPECT_LE(p[0], 1.0);
      EXPECT_GE(p[1], 0.0);
      EXPECT_LE(p[1], 1.0);
    }
    const auto& k = c.keypoints;
    EXPECT_NEAR(dist(k[0], c.neck()), L::kHeadToNeck, 1e-12);
    EXPECT_NEAR(dist(c.neck(), c.hip()), L::kNeckToHip, 1e-12);
    for (int hand : {1, 2}) {
      const double len = dist(c.neck(), k[static_cast<std::size_t>(hand)]);
      EXPECT_GE(len, L::kArmMin - 1e-12);
      EXPECT_LE(len, L::kArmMax + 1e-12);
    }
    for (int foot : {3, 4}) {
      const double len = dist(c.hip(), k[static_cast<std::size_t>(foot)]);
      EXPECT_GE(len, L::kLegMin - 1e-12);
      EXPECT_LE(len, L::kLegMax + 1e-12);
    }
  }
}

TEST(SampleCondition, ConditionVectorInSignedUnitRange) {
  const Vector v = sample_condition(7).to_vector();
  ASSERT_EQ(v.size(), 2 * PoseCondition::kNumKeypoints);
  EXPECT_LE(v.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Render, CoincidentKeypointsGiveSingleBlob) {
  PoseCondition c;
  for (auto& p : c.keypoints) p = {0.5, 0.5};
  const Vector img = render(c, 16);
  EXPECT_GT(img.sum(), 0.0);
  EXPECT_EQ(img.maxCoeff(), 1.0);
}

TEST(Render, DeterministicAndInRange) {
  const auto c = sample_condition(3);
  const Vector a = render(c, 16);
  EXPECT_EQ(a, render(c, 16));
  EXPECT_GE(a.minCoeff(), 0.0);
  EXPECT_LE(a.maxCoeff(), 1.0);
  EXPECT_GT(a.maxCoeff(), 0.5);
}

TEST(Render, MirroredPoseGivesMirroredImage) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto c = sample_condition(s);
    for (int g : {8, 16, 21}) {
      const Vector a = render(c, g), b = render(c.mirrored(), g);
      for (int r = 0; r < g; ++r)
        for (int col = 0; col < g; ++col) EXPECT_NEAR(a(r * g + col), b(r * g + (g - 1 - col)), 1e-12);
    }
  }
}

TEST(Render, SmallGridIsParameterError) { EXPECT_THROW(render(sample_condition(0), 7), ParameterError); }

TEST(Adherence, ZeroForExactRender) {
  const auto c = sample_condition(5);
  EXPECT_EQ(adherence_error(render(c, 16), c), 0.0);
}

TEST(Adherence, PositiveForBlankImage) {
  const auto c = sample_condition(5);
  EXPECT_GT(adherence_error(Vector::Zero(256), c), 0.0);
}

TEST(Adherence, DistantPoseWorseThanNoisyTruth) {
  Rng rng(9);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto c = sample_condition(s);
    PoseCondition far = c.mirrored();
    for (auto& p : far.keypoints) p[1] = std::min(1.0, p[1] + 0.3);
    Vector noisy = render(c, 16);
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy(i) += rng.uniform(-0.05, 0.05);
    EXPECT_GT(adherence_error(render(far, 16), c), adherence_error(noisy, c));
  }
}

TEST(Adherence, NonSquareImageIsShapeError) {
  EXPECT_THROW(adherence_error(Vector::Zero(200), sample_condition(0)), ShapeError);
}

TEST(Dataset, SplitAndRanges) {
  const auto d = generate_dataset(4, 30, 6, 8);
  EXPECT_EQ(d.size(), 36u);
  EXPECT_EQ(d.images.rows(), 64);
  EXPECT_EQ(d.images.cols(), 36);
  EXPECT_EQ(d.train_indices().size(), 30u);
  EXPECT_EQ(d.holdout_indices().front(), 30u);
  EXPECT_TRUE(d.is_holdout(35));
  EXPECT_FALSE(d.is_holdout(29));
  EXPECT_GE(d.images.minCoeff(), 0.0);
  EXPECT_LE(d.images.maxCoeff(), 1.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector diff = d.images.col(static_cast<Eigen::Index>(i)) - render(d.conditions[i], 8);
    EXPECT_LE(diff.cwiseAbs().maxCoeff(), 0.05 + 1e-12);
  }
}

TEST(Dataset, PureFunctionOfSeed) {
  EXPECT_TRUE(generate_dataset(4, 20, 4, 8) == generate_dataset(4, 20, 4, 8));
  EXPECT_FALSE(generate_dataset(4, 20, 4, 8) == generate_dataset(5, 20, 4, 8));
}

TEST(Dataset, FileRoundTripAndRegenerationAreBitwise) {
  TempDir dir("data");
  const auto d = generate_dataset(11, 25, 5, 12);
  save_dataset(d, dir / "a.bin");
  EXPECT_TRUE(load_dataset(dir / "a.bin") == d);
  save_dataset(generate_dataset(11, 25, 5, 12), dir / "b.bin");
  std::ifstream a(dir / "a.bin", std::ios::binary), b(dir / "b.bin", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, sb);
}

TEST(Dataset, CorruptFileIsInputError) {
  TempDir dir("data-bad");
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << "not a dataset";
  }
  EXPECT_THROW(load_dataset(dir / "bad.bin"), InputError);
  EXPECT_THROW(load_dataset(dir / "missing.bin"), InputError);
}

TEST(ModelSpace, RoundTrip) {
  Matrix img(3, 1);
  img << 0.0, 0.5, 1.0;
  const Matrix m = to_model_space(img);
  EXPECT_DOUBLE_EQ(m(0), -1.0);
  EXPECT_DOUBLE_EQ(m(2), 1.0);
  EXPECT_EQ(to_image_space(m), img);
}
