#pragma once

#include <string>
#include <vector>

#include "dvs/model.hpp"

// Plain-text renderers used by the `report` command. SVG keeps plots free of
// any rendering dependency; every plot has a CSV twin.
namespace dvs::report {

using Matrix = std::vector<std::vector<double>>;

// One <rect class="cell"> per matrix entry, shaded by the row-normalized value.
std::string confusion_svg(const Matrix& confusion, const std::vector<std::string>& labels,
                          const std::string& title);
std::string confusion_csv(const Matrix& confusion, const std::vector<std::string>& labels);

struct DepthPoint {
  int depth = 0;
  double alpha = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

std::vector<DepthPoint> parse_grid_csv(const std::string& text, const std::string& source);
// Accuracy-vs-depth curves, one polyline per alpha.
std::string depth_svg(const std::vector<DepthPoint>& points);
std::string depth_csv(const std::vector<DepthPoint>& points);

// Published DSCNN-3 accounting figures set against this build's reference model.
inline constexpr unsigned kPublishedParams = 4141;
inline constexpr unsigned kPublishedFlops = 601600;

std::string accounting_markdown(const nn::ModelStats& stats, const nn::Model& model);

}  // namespace dvs::report
