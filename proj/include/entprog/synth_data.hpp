#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "entprog/tensor.hpp"

namespace entprog {

/// Stick-figure pose: head, left hand, right hand, left foot, right foot, as
/// (x, y) in the unit square with y pointing down. Neck and hip are implied by
/// the head position, so the skeleton is fully determined by the keypoints.
struct PoseCondition {
  static constexpr int kNumKeypoints = 5;
  using Point = std::array<double, 2>;

  std::array<Point, kNumKeypoints> keypoints{};

  Point neck() const;
  Point hip() const;

  /// Skeleton edges as point pairs.
  std::vector<std::array<Point, 2>> segments() const;

  /// x -> 1 - x for every keypoint.
  PoseCondition mirrored() const;

  /// Condition vector fed to the model: coordinates mapped to [-1, 1].
  Vector to_vector() const;

  bool operator==(const PoseCondition&) const = default;
};

/// Skeleton geometry shared by the sampler and the tests.
struct SkeletonLimits {
  static constexpr double kHeadToNeck = 0.10;
  static constexpr double kNeckToHip = 0.22;
  static constexpr double kArmMin = 0.15;
  static constexpr double kArmMax = 0.28;
  static constexpr double kLegMin = 0.18;
  static constexpr double kLegMax = 0.30;
};

/// Deterministic draw from the articulated-skeleton prior; every coordinate
/// lies in [0, 1] and every limb length within SkeletonLimits.
PoseCondition sample_condition(std::uint64_t seed);

/// Anti-aliased stick figure on a G x G grid (row-major, values in [0, 1]).
/// Throws ParameterError if G < 8.
Vector render(const PoseCondition& c, int grid);

/// Mean squared error between `x_hat` (image space) and render(c).
double adherence_error(const Vector& x_hat, const PoseCondition& c);

/// Image values in [0, 1] <-> model space in [-1, 1].
Matrix to_model_space(const Matrix& image);
Matrix to_image_space(const Matrix& model_values);

/// Pose-conditioned images. Items [0, train_count) are training items and
/// [train_count, size()) are the held-out items.
struct SyntheticDataset {
  int grid = 16;
  int num_keypoints = PoseCondition::kNumKeypoints;
  std::uint64_t seed = 0;
  std::size_t train_count = 0;
  std::size_t holdout_count = 0;
  std::vector<PoseCondition> conditions;
  Matrix images;  // grid*grid x size(), image space

  std::size_t size() const { return conditions.size(); }
  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> holdout_indices() const;
  bool is_holdout(std::size_t index) const { return index >= train_count && index < size(); }

  bool operator==(const SyntheticDataset& other) const;
};

/// Pure function of (seed, sizes, grid). Pixel noise is uniform in
/// [-0.05, 0.05] before clamping into [0, 1].
SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t train_items, std::size_t holdout_items, int grid);

/// Binary container: magic, version, header (G, J, count, holdout count,
/// seed), keypoints and images as little-endian float64.
void save_dataset(const SyntheticDataset& data, const std::filesystem::path& path);
SyntheticDataset load_dataset(const std::filesystem::path& path);

}  // namespace entprog
