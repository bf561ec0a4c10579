#include "entprog/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include "entprog/rng.hpp"

namespace entprog {

namespace {

constexpr char kDatasetMagic[8] = {'E', 'N', 'T', 'P', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDatasetVersion = 1;

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

bool in_unit_square(const PoseCondition::Point& p) { return p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0; }

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InputError("dataset file truncated");
  return v;
}

}  // namespace

PoseCondition::Point PoseCondition::neck() const {
  return {keypoints[0][0], keypoints[0][1] + SkeletonLimits::kHeadToNeck};
}

PoseCondition::Point PoseCondition::hip() const {
  const auto n = neck();
  return {n[0], n[1] + SkeletonLimits::kNeckToHip};
}

std::vector<std::array<PoseCondition::Point, 2>> PoseCondition::segments() const {
  const auto n = neck(), h = hip();
  return {{keypoints[0], n}, {n, keypoints[1]}, {n, keypoints[2]}, {n, h}, {h, keypoints[3]}, {h, keypoints[4]}};
}

PoseCondition PoseCondition::mirrored() const {
  PoseCondition m = *this;
  for (auto& p : m.keypoints) p[0] = 1.0 - p[0];
  return m;
}

Vector PoseCondition::to_vector() const {
  Vector v(2 * kNumKeypoints);
  for (int j = 0; j < kNumKeypoints; ++j) {
    v(2 * j) = 2.0 * keypoints[static_cast<std::size_t>(j)][0] - 1.0;
    v(2 * j + 1) = 2.0 * keypoints[static_cast<std::size_t>(j)][1] - 1.0;
  }
  return v;
}

PoseCondition sample_condition(std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  using L = SkeletonLimits;
  for (;;) {
    PoseCondition c;
    c.keypoints[0] = {rng.uniform(0.3, 0.7), rng.uniform(0.05, 0.2)};
    const auto neck = c.neck();
    const auto hip = c.hip();
    for (int k = 1; k <= 2; ++k) {
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double len = rng.uniform(L::kArmMin, L::kArmMax);
      c.keypoints[static_cast<std::size_t>(k)] = {neck[0] + len * std::cos(a), neck[1] + len * std::sin(a)};
    }
    for (int k = 3; k <= 4; ++k) {
      const double a = rng.uniform(std::numbers::pi / 6.0, 5.0 * std::numbers::pi / 6.0);
      const double len = rng.uniform(L::kLegMin, L::kLegMax);
      c.keypoints[static_cast<std::size_t>(k)] = {hip[0] + len * std::cos(a), hip[1] + len * std::sin(a)};
    }
    if (std::all_of(c.keypoints.begin(), c.keypoints.end(), in_unit_square)) return c;
  }
}

Vector render(const PoseCondition& c, int grid) {
  if (grid < 8) throw ParameterError("render: grid must be >= 8");
  const double g = grid;
  const auto segs = c.segments();
  Vector img = Vector::Zero(grid * grid);
  for (int r = 0; r < grid; ++r) {
    for (int col = 0; col < grid; ++col) {
      const double px = col + 0.5, py = r + 0.5;
      double v = 0.0;
      for (const auto& s : segs) {
        const double d = segment_distance(px, py, s[0][0] * g, s[0][1] * g, s[1][0] * g, s[1][1] * g);
        // Half-pixel core plus one pixel of linear falloff.
        v = std::max(v, std::clamp(1.5 - d, 0.0, 1.0));
      }
      img(r * grid + col) = v;
    }
  }
  return img;
}

double adherence_error(const Vector& x_hat, const PoseCondition& c) {
  const auto g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(x_hat.size()))));
  if (g * g != x_hat.size() || g < 8) throw ShapeError("adherence_error: image is not a square grid of side >= 8");
  const Vector target = render(c, g);
  return (x_hat - target).squaredNorm() / static_cast<double>(target.size());
}

Matrix to_model_space(const Matrix& image) { return (2.0 * image.array() - 1.0).matrix(); }

Matrix to_image_space(const Matrix& model_values) { return ((model_values.array() + 1.0) * 0.5).matrix(); }

std::vector<std::size_t> SyntheticDataset::train_indices() const {
  std::vector<std::size_t> idx(train_count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::vector<std::size_t> SyntheticDataset::holdout_indices() const {
  std::vector<std::size_t> idx(holdout_count);
  std::iota(idx.begin(), idx.end(), train_count);
  return idx;
}

bool SyntheticDataset::operator==(const SyntheticDataset& other) const {
  return grid == other.grid && num_keypoints == other.num_keypoints && seed == other.seed &&
         train_count == other.train_count && holdout_count == other.holdout_count &&
         conditions == other.conditions && images.rows() == other.images.rows() &&
         images.cols() == other.images.cols() &&
         std::memcmp(images.data(), other.images.data(), sizeof(double) * static_cast<std::size_t>(images.size())) == 0;
}

SyntheticDataset generate_dataset(std::uint64_t seed, std::size_t train_items, std::size_t holdout_items, int grid) {
  if (grid < 8) throw ParameterError("generate_dataset: grid must be >= 8");
  if (train_items == 0) throw ParameterError("generate_dataset: need at least one training item");
  SyntheticDataset data;
  data.grid = grid;
  data.seed = seed;
  data.train_count = train_items;
  data.holdout_count = holdout_items;
  const std::size_t n = train_items + holdout_items;
  data.conditions.resize(n);
  data.images.resize(grid * grid, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {kStreamData, i}));
    data.conditions[i] = sample_condition(rng.engine()());
    Vector img = render(data.conditions[i], grid);
    for (Eigen::Index k = 0; k < img.size(); ++k) img(k) = std::clamp(img(k) + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    data.images.col(static_cast<Eigen::Index>(i)) = img;
  }
  return data;
}

void save_dataset(const SyntheticDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  write_pod(out, kDatasetVersion);
  write_pod(out, static_cast<std::uint32_t>(data.grid));
  write_pod(out, static_cast<std::uint32_t>(data.num_keypoints));
  write_pod(out, static_cast<std::uint64_t>(data.size()));
  write_pod(out, static_cast<std::uint64_t>(data.holdout_count));
  write_pod(out, data.seed);
  for (const auto& c : data.conditions)
    for (const auto& p : c.keypoints) {
      write_pod(out, p[0]);
      write_pod(out, p[1]);
    }
  out.write(reinterpret_cast<const char*>(data.images.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(data.images.size())));
  if (!out) throw InputError("failed writing " + path.string());
}

SyntheticDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) throw InputError("not a dataset file: " + path.string());
  if (read_pod<std::uint32_t>(in) != kDatasetVersion) throw InputError("unsupported dataset version");
  SyntheticDataset data;
  data.grid = static_cast<int>(read_pod<std::uint32_t>(in));
  data.num_keypoints = static_cast<int>(read_pod<std::uint32_t>(in));
  const auto count = read_pod<std::uint64_t>(in);
  data.holdout_count = read_pod<std::uint64_t>(in);
  data.seed = read_pod<std::uint64_t>(in);
  if (data.num_keypoints != PoseCondition::kNumKeypoints || data.holdout_count > count || data.grid < 8)
    throw InputError("corrupt dataset header");
  data.train_count = count - data.holdout_count;
  data.conditions.resize(count);
  for (auto& c : data.conditions)
    for (auto& p : c.keypoints) {
      p[0] = read_pod<double>(in);
      p[1] = read_pod<double>(in);
    }
  data.images.resize(data.grid * data.grid, static_cast<Eigen::Index>(count));
  in.read(reinterpret_cast<char*>(data.images.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(data.images.size())));
  if (!in) throw InputError("dataset file truncated");
  return data;
}

}  // namespace entprog
