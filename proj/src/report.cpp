#include "adassm/report.hpp"

#include "adassm/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace adassm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

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

// Largest "nice" tick step giving at most ~5 ticks.
double tick_step(double top) {
  if (top <= 0) return 1.0;
  const double raw = top / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

void ExperimentMatrix::validate() const {
  if (runs.empty()) throw std::invalid_argument("experiment matrix has no runs");
  std::set<std::string> seen;
  for (const auto& r : runs) {
    if (r.name.empty() || r.name.find_first_of("/\\ ") != std::string::npos || r.name == "." || r.name == "..") {
      throw std::invalid_argument("invalid run name '" + r.name + "'");
    }
    if (!seen.insert(r.name).second) throw std::invalid_argument("duplicate run name '" + r.name + "'");
  }
}

ExperimentMatrix default_matrix(const json& base) {
  struct Def {
    const char* name;
    const char* mode;
    double sigma;
  };
  const Def defs[] = {{"noaug", "noaug", 0},          {"gaussian_s1", "gaussian", 1},
                      {"gaussian_s10", "gaussian", 10}, {"kde", "kde_offline", 0},
                      {"adassm", "adassm", 0},        {"adassm_bc", "adassm_bc", 0},
                      {"adassm_pc", "adassm_pc", 0},  {"adassm_bc_pc", "adassm_bc_pc", 0}};
  ExperimentMatrix m;
  for (const auto& d : defs) {
    json j = base.is_null() ? json::object() : base;
    j["mode"] = d.mode;
    if (d.sigma > 0) j["gaussian_sigma"] = d.sigma;
    // contrastive weights from the base only reach modes that use them
    const Mode mode = mode_from_string(d.mode);
    if (!uses_bottleneck_contrastive(mode)) j.erase("lambda_bc");
    if (!uses_correspondence_contrastive(mode)) j.erase("lambda_pc");
    m.runs.push_back({d.name, j.get<TrainConfig>()});
  }
  return m;
}

ExperimentMatrix matrix_from_json(const json& j) {
  const json base = j.value("base", json::object());
  if (!j.contains("runs")) {
    auto m = default_matrix(base);
    m.validate();
    return m;
  }
  ExperimentMatrix m;
  for (const auto& r : j.at("runs")) {
    json cfg = base;
    for (const auto& [k, v] : r.value("config", json::object()).items()) cfg[k] = v;
    m.runs.push_back({r.at("name").get<std::string>(), cfg.get<TrainConfig>()});
  }
  m.validate();
  return m;
}

RunSummary read_run(const fs::path& run_dir, std::vector<std::string>& warnings) {
  RunSummary s;
  s.name = run_dir.filename().string();
  if (s.name.empty()) s.name = run_dir.parent_path().filename().string();
  const auto eval_path = run_dir / "eval_report.json";
  if (fs::exists(eval_path)) {
    const auto j = json::parse(read_text(eval_path));
    s.has_eval = true;
    s.mean_rmse = j.at("mean_rmse").get<double>();
    s.median_rmse = j.at("median_rmse").get<double>();
    s.mean_surface = j.at("mean_surface_distance").get<double>();
    s.median_surface = j.at("median_surface_distance").get<double>();
    s.best = j.at("best").get<std::string>();
    s.median = j.at("median").get<std::string>();
    s.worst = j.at("worst").get<std::string>();
  } else {
    warnings.push_back("missing " + eval_path.string());
  }
  const auto summary_path = run_dir / "summary.json";
  if (fs::exists(summary_path)) {
    const auto j = json::parse(read_text(summary_path));
    s.mode = j.value("mode", std::string());
    const auto& t = j.at("timings");
    s.has_timing = true;
    s.training_seconds = t.at("training_seconds").get<double>();
    const double aug = t.at("augmentation_seconds").get<double>();
    if (s.mode == "kde_offline") {
      s.offline_augmentation_seconds = aug;
    } else {
      s.on_the_fly_augmentation_seconds = aug;
    }
    s.total_seconds = s.offline_augmentation_seconds + s.training_seconds;
  } else {
    warnings.push_back("missing " + summary_path.string());
  }
  return s;
}

std::string bar_chart_svg(const BarChart& chart) {
  constexpr double kLeft = 70, kTop = 40, kPlotH = 260, kBarW = 40, kGap = 20, kBottom = 90;
  const double plot_w = std::max(1.0, static_cast<double>(chart.bars.size())) * (kBarW + kGap) + kGap;
  const double width = kLeft + plot_w + 20;
  const double height = kTop + kPlotH + kBottom;
  double top = 0.0;
  for (const auto& b : chart.bars) top = std::max(top, b.second);
  const double step = tick_step(top);
  const double axis_max = top > 0 ? std::ceil(top / step) * step : 1.0;
  const double scale = kPlotH / axis_max;
  const double base_y = kTop + kPlotH;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\""
     << fixed(height, 0) << "\" data-scale=\"" << num(scale) << "\">\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"" << fixed(width, 0) << "\" height=\"" << fixed(height, 0)
     << "\" fill=\"white\"/>\n";
  os << "  <text x=\"" << fixed(width / 2, 1) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"16\">"
     << xml_escape(chart.title) << "</text>\n";
  for (double v = 0; v <= axis_max + 1e-9 * axis_max; v += step) {
    const double y = base_y - v * scale;
    os << "  <line x1=\"" << fixed(kLeft, 1) << "\" y1=\"" << fixed(y, 3) << "\" x2=\"" << fixed(kLeft + plot_w, 1)
       << "\" y2=\"" << fixed(y, 3) << "\" stroke=\"#dddddd\"/>\n";
    os << "  <text x=\"" << fixed(kLeft - 6, 1) << "\" y=\"" << fixed(y + 4, 3)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(v) << "</text>\n";
  }
  os << "  <text x=\"16\" y=\"" << fixed(kTop + kPlotH / 2, 1) << "\" transform=\"rotate(-90 16 "
     << fixed(kTop + kPlotH / 2, 1) << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << xml_escape(chart.axis_label) << "</text>\n";
  for (std::size_t i = 0; i < chart.bars.size(); ++i) {
    const auto& [name, value] = chart.bars[i];
    const double x = kLeft + kGap + static_cast<double>(i) * (kBarW + kGap);
    const double h = std::max(0.0, value) * scale;
    os << "  <rect class=\"bar\" data-run=\"" << xml_escape(name) << "\" data-value=\"" << num(value)
       << "\" data-scale=\"" << num(scale) << "\" x=\"" << fixed(x, 3) << "\" y=\"" << num(base_y - h)
       << "\" width=\"" << fixed(kBarW, 0) << "\" height=\"" << num(h) << "\" fill=\"#4a78a8\"/>\n";
    const double lx = x + kBarW / 2;
    const double ly = base_y + 12;
    os << "  <text x=\"" << fixed(lx, 3) << "\" y=\"" << fixed(ly, 1) << "\" transform=\"rotate(40 " << fixed(lx, 3)
       << ' ' << fixed(ly, 1) << ")\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(name)
       << "</text>\n";
  }
  os << "  <line x1=\"" << fixed(kLeft, 1) << "\" y1=\"" << fixed(base_y, 1) << "\" x2=\"" << fixed(kLeft + plot_w, 1)
     << "\" y2=\"" << fixed(base_y, 1) << "\" stroke=\"black\"/>\n";
  os << "</svg>\n";
  return os.str();
}

std::string comparison_csv(const std::vector<RunSummary>& runs) {
  std::string s = "run,mode,mean_rmse,median_rmse,mean_surface_distance,median_surface_distance,best,median,worst\n";
  for (const auto& r : runs) {
    if (!r.has_eval) continue;
    s += r.name + "," + r.mode + "," + num(r.mean_rmse) + "," + num(r.median_rmse) + "," + num(r.mean_surface) +
         "," + num(r.median_surface) + "," + r.best + "," + r.median + "," + r.worst + "\n";
  }
  return s;
}

std::string timing_csv(const std::vector<RunSummary>& runs) {
  std::string s =
      "run,mode,pipeline,offline_augmentation_seconds,training_seconds,total_seconds,"
      "on_the_fly_augmentation_seconds\n";
  for (const auto& r : runs) {
    if (!r.has_timing) continue;
    s += r.name + "," + r.mode + "," + (r.mode == "kde_offline" ? "offline" : "on_the_fly") + "," +
         num(r.offline_augmentation_seconds) + "," + num(r.training_seconds) + "," + num(r.total_seconds) + "," +
         num(r.on_the_fly_augmentation_seconds) + "\n";
  }
  return s;
}

ReportResult emit_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  ReportResult res;
  for (const auto& d : run_dirs) {
    if (!fs::is_directory(d)) {
      res.warnings.push_back("run directory not found: " + d.string());
      continue;
    }
    res.runs.push_back(read_run(d, res.warnings));
  }
  std::sort(res.runs.begin(), res.runs.end(), [](const auto& a, const auto& b) { return a.name < b.name; });

  fs::create_directories(out_dir / "heatmaps");
  write_text(out_dir / "comparison.csv", comparison_csv(res.runs));
  write_text(out_dir / "timing.csv", timing_csv(res.runs));

  BarChart rmse{"Test RMSE per run", "mean RMSE (grid units)", {}};
  BarChart surface{"Surface-to-surface distance per run", "mean distance (grid units)", {}};
  for (const auto& r : res.runs) {
    if (!r.has_eval) continue;
    rmse.bars.emplace_back(r.name, r.mean_rmse);
    surface.bars.emplace_back(r.name, r.mean_surface);
  }
  write_text(out_dir / "rmse.svg", bar_chart_svg(rmse));
  write_text(out_dir / "surface.svg", bar_chart_svg(surface));

  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    const auto& r = res.runs[i];
    if (!r.has_eval) continue;
    const fs::path& dir = *std::find_if(run_dirs.begin(), run_dirs.end(), [&](const fs::path& p) {
      auto n = p.filename().string();
      if (n.empty()) n = p.parent_path().filename().string();
      return n == r.name;
    });
    for (const auto& [role, id] : {std::pair{"best", r.best}, {"median", r.median}, {"worst", r.worst}}) {
      const auto src = dir / ("heatmap_" + id + ".csv");
      if (!fs::exists(src)) {
        res.warnings.push_back("missing " + src.string());
        continue;
      }
      fs::copy_file(src, out_dir / "heatmaps" / (r.name + "_" + role + ".csv"),
                    fs::copy_options::overwrite_existing);
    }
  }
  std::string w;
  for (const auto& s : res.warnings) w += s + "\n";
  write_text(out_dir / "warnings.txt", w);
  return res;
}

}  // namespace adassm
