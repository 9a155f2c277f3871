#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "icisense/apes_omp.hpp"
#include "icisense/delay_doppler.hpp"
#include "icisense/harness.hpp"
#include "icisense/music.hpp"

namespace icisense {

/// 64-bit FNV-1a of a text, as 16 hex digits.
std::string config_hash(const std::string& text);

/// Provenance written as the first line of every output file.
struct OutputMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string line() const;  // "config_hash=... seed=..."
};

/// Plain CSV with a leading "# ..." comment. Numbers use a fixed %.10g
/// format so repeated runs are byte-identical.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const OutputMeta& meta, const std::vector<std::string>& columns);
  CsvWriter& cell(double v);
  CsvWriter& cell(long v);
  CsvWriter& cell(int v) { return cell(static_cast<long>(v)); }
  CsvWriter& cell(const std::string& v);
  void end_row();
  void close();

 private:
  void sep();
  std::string path_;
  std::ofstream os_;
  size_t n_cols_;
  size_t in_row_ = 0;
};

std::string format_number(double v);

void write_music_csv(const std::string& path, const OutputMeta& meta, const AngleEstimateSet& angles);
void write_cfo_csv(const std::string& path, const OutputMeta& meta, const CfoSpectrum& spectrum);
void write_range_profile_csv(const std::string& path, const OutputMeta& meta, const std::vector<double>& range_m,
                             const std::vector<double>& power_db);
void write_detections_csv(const std::string& path, const OutputMeta& meta, const std::vector<Detection>& detections);
void write_pd_csv(const std::string& path, const OutputMeta& meta, const std::vector<MetricsReport>& reports);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN entries break the line
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::vector<double> hlines;  // dashed reference levels (thresholds)
};

/// Static line plot as a standalone SVG document.
void write_svg_plot(const std::string& path, const OutputMeta& meta, const PlotSpec& spec);

}  // namespace icisense
