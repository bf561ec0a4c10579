#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace entprog {

/// Comma-separated table with a header row and a "# config_hash=<hash>"
/// footer line. Doubles are written with 17 significant digits.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row(std::vector<std::string> cells);
  std::size_t num_rows() const { return rows_.size(); }

  std::string render(const std::string& config_hash) const;
  void write(const std::filesystem::path& path, const std::string& config_hash) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_double(double v);

/// Reads a CSV produced by CsvTable (footer and blank lines skipped).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, bool skip_header = true);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static SVG charts.
void write_scatter_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series);
void write_line_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<Series>& series);

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace entprog
