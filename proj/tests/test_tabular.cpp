#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include <gtest/gtest.h>

#include "entprog/errors.hpp"
#include "entprog/tabular.hpp"
#include "support.hpp"

using namespace entprog;
using entprog::testing::TempDir;

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(Csv, RenderAndRead) {
  CsvTable t({"a", "b"});
  t.row({"1", format_double(0.5)}).row({"2", format_double(-std::numeric_limits<double>::infinity())});
  EXPECT_EQ(t.num_rows(), 2u);
  EXPECT_EQ(t.render("abc"), "a,b\n1,0.5\n2,-inf\n# config_hash=abc\n");
  EXPECT_THROW(t.row({"only-one"}), ParameterError);

  TempDir dir("csv");
  t.write(dir / "t.csv", "abc");
  const auto rows = read_csv(dir / "t.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], (std::vector<std::string>{"2", "-inf"}));
  EXPECT_EQ(read_csv(dir / "t.csv", false).size(), 3u);
  EXPECT_THROW(read_csv(dir / "missing.csv"), InputError);
}

TEST(Csv, DoublesRoundTrip) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20.0, 20.0));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Spearman, NoTiesMatchesSquaredRankDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + rng.below(30);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = x[i] + rng.normal();
    }
    const auto rx = average_ranks(x), ry = average_ranks(y);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double nn = static_cast<double>(n);
    EXPECT_NEAR(spearman(x, y), 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0)), 1e-12);
  }
}

TEST(Spearman, TiesUseAverageRanks) {
  const std::vector<double> x = {1, 2, 2, 3, 4, 4, 4, 5};
  const std::vector<double> y = {2, 1, 3, 3, 5, 4, 6, 6};
  EXPECT_NEAR(spearman(x, y), pearson(average_ranks(x), average_ranks(y)), 1e-12);
}

TEST(Spearman, EdgeCases) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_EQ(spearman({1, 1, 1}, {1, 2, 3}), 0.0);
  EXPECT_EQ(spearman({1}, {2}), 0.0);
  EXPECT_THROW(spearman({1, 2}, {1}), ParameterError);
}

TEST(Svg, WritesCharts) {
  TempDir dir("svg");
  const std::vector<Series> s = {{"a", {0, 1, 2}, {1.0, 0.5, 0.25}}, {"b", {0, 2}, {1.0, 0.75}}};
  write_line_svg(dir / "l.svg", "title", "x", "y", s);
  write_scatter_svg(dir / "s.svg", "title", "x", "y", s);
  for (const char* f : {"l.svg", "s.svg"}) {
    std::ifstream in(dir / f);
    const std::string text{std::istreambuf_iterator<char>(in), {}};
    EXPECT_NE(text.find("<svg"), std::string::npos);
    EXPECT_NE(text.find("</svg>"), std::string::npos);
  }
}
