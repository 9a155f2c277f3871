#include "icisense/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace icisense {

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string OutputMeta::line() const { return "config_hash=" + config_hash + " seed=" + std::to_string(seed); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path, const OutputMeta& meta, const std::vector<std::string>& columns)
    : path_(path), os_(path), n_cols_(columns.size()) {
  if (!os_) throw std::runtime_error("cannot open '" + path + "' for writing");
  os_ << "# " << meta.line() << '\n';
  for (size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
  os_ << '\n';
}

void CsvWriter::sep() {
  if (in_row_ >= n_cols_) throw std::logic_error("CSV row for '" + path_ + "' has too many cells");
  if (in_row_++) os_ << ',';
}

CsvWriter& CsvWriter::cell(double v) {
  sep();
  os_ << format_number(v);
  return *this;
}

CsvWriter& CsvWriter::cell(long v) {
  sep();
  os_ << v;
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
  sep();
  os_ << v;
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != n_cols_) throw std::logic_error("CSV row for '" + path_ + "' has too few cells");
  os_ << '\n';
  in_row_ = 0;
}

void CsvWriter::close() {
  os_.close();
  if (!os_) throw std::runtime_error("I/O error while writing '" + path_ + "'");
}

void write_music_csv(const std::string& path, const OutputMeta& meta, const AngleEstimateSet& angles) {
  CsvWriter w(path, meta, {"theta_deg", "music_db"});
  const double peak = angles.spectrum.empty() ? 1.0 : *std::max_element(angles.spectrum.begin(), angles.spectrum.end());
  for (size_t i = 0; i < angles.grid_deg.size(); ++i) {
    w.cell(angles.grid_deg[i]).cell(10.0 * std::log10(angles.spectrum[i] / peak));
    w.end_row();
  }
  w.close();
}

void write_cfo_csv(const std::string& path, const OutputMeta& meta, const CfoSpectrum& spectrum) {
  CsvWriter w(path, meta, {"velocity_mps", "glrt_norm"});
  for (size_t i = 0; i < spectrum.velocity_mps.size(); ++i) {
    w.cell(spectrum.velocity_mps[i]).cell(spectrum.glrt_norm[i]);
    w.end_row();
  }
  w.close();
}

void write_range_profile_csv(const std::string& path, const OutputMeta& meta, const std::vector<double>& range_m,
                             const std::vector<double>& power_db) {
  CsvWriter w(path, meta, {"range_m", "power_db"});
  for (size_t i = 0; i < power_db.size(); ++i) {
    w.cell(range_m[i]).cell(power_db[i]);
    w.end_row();
  }
  w.close();
}

void write_detections_csv(const std::string& path, const OutputMeta& meta, const std::vector<Detection>& detections) {
  CsvWriter w(path, meta, {"source", "range_m", "vel_amb_mps", "vel_res_mps", "angle_deg", "gain_abs", "gain_phase"});
  for (const auto& d : detections) {
    w.cell(d.source).cell(d.range_m).cell(d.velocity_ambiguous).cell(d.velocity_resolved).cell(d.angle_deg);
    w.cell(std::abs(d.gain)).cell(std::arg(d.gain));
    w.end_row();
  }
  w.close();
}

void write_pd_csv(const std::string& path, const OutputMeta& meta, const std::vector<MetricsReport>& reports) {
  CsvWriter w(path, meta, {"snr_db", "velocity_mps", "pipeline", "pd", "fdr", "rmse_range_m", "rmse_vel_mps", "n_trials"});
  for (const auto& r : reports) {
    w.cell(r.snr_db).cell(r.velocity_mps).cell(r.pipeline).cell(r.pd).cell(r.fdr);
    w.cell(r.rmse_range_m).cell(r.rmse_velocity_mps).cell(r.n_trials);
    w.end_row();
  }
  w.close();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// 1-2-5 ticks covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double f : {1.0, 2.0, 5.0, 10.0})
    if (f * mag >= raw) {
      step = f * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  return t;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

void write_svg_plot(const std::string& path, const OutputMeta& meta, const PlotSpec& spec) {
  constexpr double W = 720, H = 440, ml = 70, mr = 170, mt = 40, mb = 55;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : spec.series)
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  for (double h : spec.hlines) {
    y0 = std::min(y0, h);
    y1 = std::max(y1, h);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- " << meta.line() << " -->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 - mr / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(spec.title)
     << "</text>\n";
  for (double t : nice_ticks(x0, x1)) {
    os << "<line x1=\"" << format_number(px(t)) << "\" x2=\"" << format_number(px(t)) << "\" y1=\"" << mt << "\" y2=\""
       << H - mb << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << format_number(px(t)) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">"
       << format_number(t) << "</text>\n";
  }
  for (double t : nice_ticks(y0, y1)) {
    os << "<line x1=\"" << ml << "\" x2=\"" << W - mr << "\" y1=\"" << format_number(py(t)) << "\" y2=\""
       << format_number(py(t)) << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << format_number(py(t) + 4) << "\" text-anchor=\"end\">"
       << format_number(t) << "</text>\n";
  }
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml_escape(spec.x_label)
     << "</text>\n";
  os << "<text transform=\"translate(16," << (mt + H - mb) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(spec.y_label) << "</text>\n";
  for (double h : spec.hlines)
    os << "<line x1=\"" << ml << "\" x2=\"" << W - mr << "\" y1=\"" << format_number(py(h)) << "\" y2=\""
       << format_number(py(h)) << "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";

  for (size_t k = 0; k < spec.series.size(); ++k) {
    const auto& s = spec.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string d;
    bool pen = false;
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        pen = false;
        continue;
      }
      d += (pen ? " L" : " M") + format_number(px(s.x[i])) + "," + format_number(py(s.y[i]));
      pen = true;
    }
    if (!d.empty())
      os << "<path d=\"" << d.substr(1) << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.4\"/>\n";
    // Single points would vanish as paths; mark every sample on short series.
    if (s.x.size() <= 40)
      for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
          os << "<circle cx=\"" << format_number(px(s.x[i])) << "\" cy=\"" << format_number(py(s.y[i]))
             << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = mt + 14 + 18.0 * k;
    os << "<line x1=\"" << W - mr + 12 << "\" x2=\"" << W - mr + 36 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - mr + 42 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << os.str();
  if (!f) throw std::runtime_error("I/O error while writing '" + path + "'");
}

}  // namespace icisense
