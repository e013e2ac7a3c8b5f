#include "report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "dvs/error.hpp"

namespace dvs::report {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string with_commas(unsigned long long v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

}  // namespace

std::string confusion_svg(const Matrix& m, const std::vector<std::string>& labels, const std::string& title) {
  const std::size_t k = m.size();
  for (const auto& row : m) {
    if (row.size() != k) throw ShapeError("confusion_svg: matrix must be square");
  }
  if (labels.size() != k) throw ShapeError("confusion_svg: one label per class required");
  const int cell = 80, left = 110, top = 60;
  const int width = left + cell * static_cast<int>(k) + 20, height = top + cell * static_cast<int>(k) + 60;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << esc(title) << "</text>\n";
  o << "<text x=\"" << left << "\" y=\"" << top - 8 << "\">predicted</text>\n";
  for (std::size_t r = 0; r < k; ++r) {
    double total = 0.0;
    for (double v : m[r]) total += v;
    for (std::size_t c = 0; c < k; ++c) {
      const double frac = total > 0.0 ? m[r][c] / total : 0.0;
      const int shade = 255 - static_cast<int>(frac * 200.0 + 0.5);
      const int x = left + cell * static_cast<int>(c), y = top + cell * static_cast<int>(r);
      o << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"rgb(" << shade << "," << shade << ",255)\" stroke=\"#333\"/>\n";
      o << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
        << fmt("%.0f", m[r][c]) << "</text>\n";
    }
    o << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * static_cast<int>(r) + cell / 2 + 4
      << "\" text-anchor=\"end\">" << esc(labels[r]) << "</text>\n";
  }
  for (std::size_t c = 0; c < k; ++c) {
    o << "<text x=\"" << left + cell * static_cast<int>(c) + cell / 2 << "\" y=\"" << top + cell * static_cast<int>(k) + 18
      << "\" text-anchor=\"middle\">" << esc(labels[c]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string confusion_csv(const Matrix& m, const std::vector<std::string>& labels) {
  std::string out = "true\\predicted";
  for (const auto& l : labels) out += "," + l;
  out += "\n";
  for (std::size_t r = 0; r < m.size(); ++r) {
    out += labels.at(r);
    for (double v : m[r]) out += "," + fmt("%.0f", v);
    out += "\n";
  }
  return out;
}

std::vector<DepthPoint> parse_grid_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty grid CSV");
  std::vector<std::string> cols;
  {
    std::istringstream h(line);
    std::string c;
    while (std::getline(h, c, ',')) cols.push_back(c);
  }
  const auto col = [&](const std::string& name) {
    const auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw FormatError(source + ": grid CSV lacks column '" + name + "'");
    return static_cast<std::size_t>(it - cols.begin());
  };
  const std::size_t cd = col("depth"), ca = col("alpha"), cv = col("val_acc"), ct = col("test_acc");
  std::vector<DepthPoint> out;
  for (int row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream l(line);
    std::string c;
    while (std::getline(l, c, ',')) f.push_back(c);
    if (f.size() != cols.size()) throw FormatError(source + ": line " + std::to_string(row) + " has wrong field count");
    try {
      out.push_back({std::stoi(f[cd]), std::stod(f[ca]), std::stod(f[cv]), std::stod(f[ct])});
    } catch (const std::exception&) {
      throw FormatError(source + ": line " + std::to_string(row) + " is not numeric");
    }
  }
  return out;
}

std::string depth_svg(const std::vector<DepthPoint>& pts) {
  const int left = 60, top = 40, w = 420, h = 260;
  int dmin = 1, dmax = 1;
  double amin = 1.0, amax = 0.0;
  for (const auto& p : pts) {
    dmin = std::min(dmin, p.depth);
    dmax = std::max(dmax, p.depth);
    amin = std::min({amin, p.test_acc, p.val_acc});
    amax = std::max({amax, p.test_acc, p.val_acc});
  }
  if (amax <= amin) amax = amin + 0.01;
  const auto px = [&](int d) { return left + (dmax == dmin ? w / 2 : (d - dmin) * w / (dmax - dmin)); };
  const auto py = [&](double a) { return top + h - static_cast<int>((a - amin) / (amax - amin) * h + 0.5); };

  std::map<double, std::vector<DepthPoint>> by_alpha;
  for (const auto& p : pts) by_alpha[p.alpha].push_back(p);
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + w + 160 << "\" height=\"" << top + h + 50
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">test accuracy vs depth</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w << "\" height=\"" << h
    << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (int d = dmin; d <= dmax; ++d) {
    o << "<text x=\"" << px(d) << "\" y=\"" << top + h + 16 << "\" text-anchor=\"middle\">" << d << "</text>\n";
  }
  o << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << fmt("%.3f", amax) << "</text>\n";
  o << "<text x=\"" << left - 6 << "\" y=\"" << top + h << "\" text-anchor=\"end\">" << fmt("%.3f", amin) << "</text>\n";
  std::size_t i = 0;
  for (auto& [alpha, series] : by_alpha) {
    std::sort(series.begin(), series.end(), [](const DepthPoint& a, const DepthPoint& b) { return a.depth < b.depth; });
    const char* colour = colours[i % 5];
    o << "<polyline class=\"series\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : series) o << px(p.depth) << "," << py(p.test_acc) << " ";
    o << "\"/>\n";
    for (const auto& p : series) {
      o << "<circle cx=\"" << px(p.depth) << "\" cy=\"" << py(p.test_acc) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    }
    o << "<text x=\"" << left + w + 12 << "\" y=\"" << top + 16 + 18 * static_cast<int>(i) << "\" fill=\"" << colour
      << "\">alpha " << fmt("%.2f", alpha) << "</text>\n";
    ++i;
  }
  o << "</svg>\n";
  return o.str();
}

std::string depth_csv(const std::vector<DepthPoint>& pts) {
  std::string out = "depth,alpha,val_acc,test_acc\n";
  for (const auto& p : pts) {
    out += std::to_string(p.depth) + "," + fmt("%.2f", p.alpha) + "," + fmt("%.6f", p.val_acc) + "," +
           fmt("%.6f", p.test_acc) + "\n";
  }
  return out;
}

std::string accounting_markdown(const nn::ModelStats& stats, const nn::Model& model) {
  std::ostringstream o;
  o << "## Accounting\n\n";
  o << "| source | params | MACs | FLOPs |\n|---|---:|---:|---:|\n";
  o << "| this reference model (depth " << model.depth << ") | " << with_commas(stats.params) << " | "
    << with_commas(stats.macs) << " | " << with_commas(stats.flops()) << " |\n";
  o << "| published DSCNN-3 | " << with_commas(kPublishedParams) << " | n/a | " << with_commas(kPublishedFlops)
    << " |\n\n";
  o << "Divergence: the published counts depend on kernel sizes, pool extents and padding that are not "
       "documented, so they cannot be reproduced. This build uses 3x3 kernels, 8/16/32 channels, 2x1 max "
       "pooling and a final average pool, which gives "
    << with_commas(stats.params) << " parameters instead of " << with_commas(kPublishedParams)
    << ". The published FLOP figure is quoted as printed; its counting convention (MACs or 2 x MACs) is "
       "not stated.\n\n";
  o << "| layer | kind | params | MACs |\n|---:|---|---:|---:|\n";
  for (std::size_t i = 0; i < model.layers.size() && i < stats.per_layer.size(); ++i) {
    o << "| " << i << " | " << nn::to_string(model.layers[i].kind) << " | " << with_commas(stats.per_layer[i].params)
      << " | " << with_commas(stats.per_layer[i].macs) << " |\n";
  }
  return o.str();
}

}  // namespace dvs::report
