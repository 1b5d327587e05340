#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "carflow/landscape.hpp"

namespace carflow {

// Minimal deterministic SVG writer: fixed-precision coordinates, no
// environment-dependent formatting, so identical inputs give identical bytes.

/// Scatter plot of 2-D points on fixed axes.
std::string svg_scatter(const std::vector<Eigen::Vector2d>& pts, double x_min, double x_max,
                        double y_min, double y_max, const std::string& title);

/// Heatmap of a landscape grid; one rect class="cell" per lattice point.
std::string svg_heatmap(const Grid& grid, const std::string& title);

/// Single line series through (x, y) pairs.
std::string svg_line(const std::vector<std::pair<double, double>>& series,
                     const std::string& title);

void save_text(const std::string& text, const std::string& path);

}  // namespace carflow
