#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/geometry.hpp"

namespace cosgp::supports {

/// The fine-resolution pixel lattice carrying the predictors. Pixels are
/// squares of side `cell_size`; centroids must lie on a regular lattice
/// (holes allowed). The lattice row/col coordinates are recovered from the
/// centroids and used for both polygon clipping and distance bucketing.
struct FineGrid {
  int n_a = 0;
  double cell_size = 0.0;
  Eigen::MatrixXd centroids;   // n_a x 2
  Eigen::MatrixXd predictors;  // n_a x p
  Eigen::MatrixXd design;      // n_a x (p+1), leading all-ones column

  std::vector<int> row, col;  // lattice coordinates per pixel
  int n_rows = 0, n_cols = 0;
  double origin_x = 0.0, origin_y = 0.0;  // centroid of lattice cell (0,0)
  std::vector<int> lattice;               // (r * n_cols + c) -> pixel or -1

  int p() const { return static_cast<int>(predictors.cols()); }
  double pixel_area() const { return cell_size * cell_size; }

  int pixel_at(int r, int c) const {
    if (r < 0 || c < 0 || r >= n_rows || c >= n_cols) return -1;
    return lattice[static_cast<std::size_t>(r) * n_cols + c];
  }

  /// Axis-aligned extent of pixel i: [x0,x1] x [y0,y1].
  void pixel_rect(int i, double& x0, double& x1, double& y0, double& y1) const {
    const double h = cell_size;
    x0 = origin_x + col[i] * h - 0.5 * h;
    x1 = x0 + h;
    y0 = origin_y + row[i] * h - 0.5 * h;
    y1 = y0 + h;
  }

  double distance(int i, int j) const {
    return std::hypot(centroids(i, 0) - centroids(j, 0),
                      centroids(i, 1) - centroids(j, 1));
  }
};

namespace detail {

inline double infer_cell_size(const Eigen::MatrixXd& centroids) {
  double best = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<double> v(centroids.rows());
    for (int i = 0; i < centroids.rows(); ++i) v[i] = centroids(i, axis);
    std::sort(v.begin(), v.end());
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double gap = v[i] - v[i - 1];
      if (gap > 1e-12 && gap < best) best = gap;
    }
  }
  if (!std::isfinite(best)) {
    throw ValidationError("cannot infer grid spacing from centroids; pass cell_size");
  }
  return best;
}

}  // namespace detail

/// Build a FineGrid from centroids and predictors, inferring lattice
/// structure. cell_size <= 0 means infer from the minimum coordinate gap.
inline FineGrid make_grid(Eigen::MatrixXd centroids, Eigen::MatrixXd predictors,
                          double cell_size = 0.0) {
  if (centroids.rows() == 0) throw EmptyInput("grid has no pixels");
  if (centroids.cols() != 2) throw DimensionMismatch("centroids must be n x 2");
  if (predictors.rows() != centroids.rows()) {
    throw DimensionMismatch("predictor rows != pixel count");
  }

  FineGrid g;
  g.n_a = static_cast<int>(centroids.rows());
  g.cell_size = cell_size > 0.0 ? cell_size : detail::infer_cell_size(centroids);
  g.centroids = std::move(centroids);
  g.predictors = std::move(predictors);

  g.design.resize(g.n_a, g.predictors.cols() + 1);
  g.design.col(0).setOnes();
  if (g.predictors.cols() > 0) g.design.rightCols(g.predictors.cols()) = g.predictors;

  const double h = g.cell_size;
  g.origin_x = g.centroids.col(0).minCoeff();
  g.origin_y = g.centroids.col(1).minCoeff();
  const double span = std::max({h, g.centroids.col(0).maxCoeff() - g.origin_x,
                                g.centroids.col(1).maxCoeff() - g.origin_y});
  const double tol = 1e-9 * span;

  g.row.resize(g.n_a);
  g.col.resize(g.n_a);
  for (int i = 0; i < g.n_a; ++i) {
    const double fx = (g.centroids(i, 0) - g.origin_x) / h;
    const double fy = (g.centroids(i, 1) - g.origin_y) / h;
    const auto c = static_cast<int>(std::llround(fx));
    const auto r = static_cast<int>(std::llround(fy));
    if (std::abs(g.centroids(i, 0) - (g.origin_x + c * h)) > tol ||
        std::abs(g.centroids(i, 1) - (g.origin_y + r * h)) > tol) {
      throw ValidationError("pixel " + std::to_string(i) +
                            " centroid is not on a regular lattice of spacing " +
                            std::to_string(h));
    }
    g.row[i] = r;
    g.col[i] = c;
    g.n_rows = std::max(g.n_rows, r + 1);
    g.n_cols = std::max(g.n_cols, c + 1);
  }

  g.lattice.assign(static_cast<std::size_t>(g.n_rows) * g.n_cols, -1);
  for (int i = 0; i < g.n_a; ++i) {
    int& slot = g.lattice[static_cast<std::size_t>(g.row[i]) * g.n_cols + g.col[i]];
    if (slot != -1) {
      throw ValidationError("pixels " + std::to_string(slot) + " and " +
                            std::to_string(i) + " share a lattice cell");
    }
    slot = i;
  }
  return g;
}

/// Full rectangular lattice with row-major pixel order (row 0 = lowest y).
inline FineGrid make_lattice_grid(int n_rows, int n_cols, double cell_size,
                                  double origin_x, double origin_y,
                                  const Eigen::MatrixXd& predictors) {
  const int n = n_rows * n_cols;
  Eigen::MatrixXd cent(n, 2);
  for (int r = 0; r < n_rows; ++r) {
    for (int c = 0; c < n_cols; ++c) {
      cent(r * n_cols + c, 0) = origin_x + c * cell_size;
      cent(r * n_cols + c, 1) = origin_y + r * cell_size;
    }
  }
  return make_grid(std::move(cent), predictors, cell_size);
}

struct SupportRegion {
  enum class Role { observed, prediction };

  /// Explicit pixel list with fractional coverage in (0, 1] per pixel.
  struct Membership {
    std::vector<int> pixels;
    std::vector<double> fractions;
  };

  std::string id;
  Role role = Role::observed;
  std::variant<Membership, Polygon> geometry;
};

inline SupportRegion membership_region(std::string id, std::vector<int> pixels,
                                       std::vector<double> fractions,
                                       SupportRegion::Role role = SupportRegion::Role::observed) {
  SupportRegion r;
  r.id = std::move(id);
  r.role = role;
  r.geometry = SupportRegion::Membership{std::move(pixels), std::move(fractions)};
  return r;
}

inline SupportRegion full_pixel_region(std::string id, std::vector<int> pixels,
                                       SupportRegion::Role role = SupportRegion::Role::observed) {
  std::vector<double> fr(pixels.size(), 1.0);
  return membership_region(std::move(id), std::move(pixels), std::move(fr), role);
}

inline SupportRegion polygon_region(std::string id, Polygon poly,
                                    SupportRegion::Role role = SupportRegion::Role::observed) {
  SupportRegion r;
  r.id = std::move(id);
  r.role = role;
  r.geometry = std::move(poly);
  return r;
}

/// Sparse area weights h_li = |B_l ∩ A_i| / |B_l| plus D_h = diag(Σ_i h_li²).
struct AggregationMap {
  struct Row {
    std::vector<int> pixels;     // sorted ascending
    std::vector<double> weights; // sums to 1
  };

  std::vector<Row> rows;
  std::vector<std::string> region_ids;
  Eigen::VectorXd D_h_diag;
  std::vector<double> areas;  // |B_l| in coordinate units
  std::vector<std::string> warnings;

  int n_b() const { return static_cast<int>(rows.size()); }

  int index_of(const std::string& id) const {
    for (int l = 0; l < n_b(); ++l) {
      if (region_ids[l] == id) return l;
    }
    return -1;
  }

  Eigen::MatrixXd dense(int n_a) const {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n_b(), n_a);
    for (int l = 0; l < n_b(); ++l) {
      const Row& r = rows[l];
      for (std::size_t k = 0; k < r.pixels.size(); ++k) H(l, r.pixels[k]) = r.weights[k];
    }
    return H;
  }

  /// H * m for an n_a x k matrix m (e.g. the design matrix or a field).
  Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_b(), m.cols());
    for (int l = 0; l < n_b(); ++l) {
      const Row& r = rows[l];
      for (std::size_t k = 0; k < r.pixels.size(); ++k) {
        out.row(l) += r.weights[k] * m.row(r.pixels[k]);
      }
    }
    return out;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_b());
    for (int l = 0; l < n_b(); ++l) {
      const Row& r = rows[l];
      for (std::size_t k = 0; k < r.pixels.size(); ++k) {
        out[l] += r.weights[k] * v[r.pixels[k]];
      }
    }
    return out;
  }
};

namespace detail {

inline AggregationMap::Row finalize_row(std::unordered_map<int, double>& acc) {
  AggregationMap::Row row;
  row.pixels.reserve(acc.size());
  for (const auto& [px, a] : acc) {
    if (a > 0.0) row.pixels.push_back(px);
  }
  std::sort(row.pixels.begin(), row.pixels.end());
  double total = 0.0;
  for (const int px : row.pixels) total += acc[px];
  row.weights.reserve(row.pixels.size());
  for (const int px : row.pixels) row.weights.push_back(acc[px] / total);
  return row;
}

}  // namespace detail

/// Compute area weights for each region over the grid. Rows follow the input
/// region order. Polygon regions partially outside the grid are renormalized
/// with a warning naming the uncovered fraction.
inline AggregationMap compute_weights(const FineGrid& grid,
                                      const std::vector<SupportRegion>& regions) {
  if (regions.empty()) throw EmptyInput("no regions given");
  {
    std::unordered_set<std::string> seen;
    for (const auto& r : regions) {
      if (!seen.insert(r.id).second) {
        throw ValidationError("duplicate region id '" + r.id + "'");
      }
    }
  }

  AggregationMap map;
  map.D_h_diag.resize(static_cast<Eigen::Index>(regions.size()));
  const double px_area = grid.pixel_area();

  for (const SupportRegion& region : regions) {
    std::unordered_map<int, double> acc;  // pixel -> intersection area
    double region_area = 0.0;

    if (const auto* mem = std::get_if<SupportRegion::Membership>(&region.geometry)) {
      if (mem->pixels.size() != mem->fractions.size()) {
        throw DimensionMismatch("region '" + region.id +
                                "': pixel and fraction lists differ in length");
      }
      for (std::size_t k = 0; k < mem->pixels.size(); ++k) {
        const int px = mem->pixels[k];
        const double f = mem->fractions[k];
        if (px < 0 || px >= grid.n_a) {
          throw ValidationError("region '" + region.id + "' references pixel " +
                                std::to_string(px) + " outside 0.." +
                                std::to_string(grid.n_a - 1));
        }
        if (!(f > 0.0) || f > 1.0 + 1e-12) {
          throw ValidationError("region '" + region.id + "': fraction " +
                                std::to_string(f) + " outside (0,1]");
        }
        acc[px] += f * px_area;
      }
      for (const auto& [px, a] : acc) {
        if (a > px_area * (1.0 + 1e-9)) {
          throw ValidationError("region '" + region.id + "': pixel " +
                                std::to_string(px) + " covered more than fully");
        }
      }
      if (acc.empty()) throw RegionOutsideGrid("region '" + region.id + "' references no pixel");
      for (const auto& [px, a] : acc) region_area += a;
    } else {
      const Polygon& poly = std::get<Polygon>(region.geometry);
      if (poly.size() < 3) {
        throw DegenerateGeometry("region '" + region.id + "': polygon with fewer than 3 vertices");
      }
      region_area = polygon_area(poly);
      if (region_area <= 0.0) {
        throw DegenerateGeometry("region '" + region.id + "': polygon has zero area");
      }
      const BoundingBox bb = bounding_box(poly);
      const double h = grid.cell_size;
      const int c0 = std::max(0, static_cast<int>(std::floor((bb.min_x - grid.origin_x + 0.5 * h) / h)) - 1);
      const int c1 = std::min(grid.n_cols - 1, static_cast<int>(std::floor((bb.max_x - grid.origin_x + 0.5 * h) / h)) + 1);
      const int r0 = std::max(0, static_cast<int>(std::floor((bb.min_y - grid.origin_y + 0.5 * h) / h)) - 1);
      const int r1 = std::min(grid.n_rows - 1, static_cast<int>(std::floor((bb.max_y - grid.origin_y + 0.5 * h) / h)) + 1);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const int px = grid.pixel_at(r, c);
          if (px < 0) continue;
          double x0, x1, y0, y1;
          grid.pixel_rect(px, x0, x1, y0, y1);
          const double a = clipped_area(poly, x0, x1, y0, y1);
          if (a > 0.0) acc[px] += a;
        }
      }
      if (acc.empty()) {
        throw RegionOutsideGrid("region '" + region.id + "' intersects no grid pixel");
      }
      double covered = 0.0;
      for (const auto& [px, a] : acc) covered += a;
      if (covered < region_area * (1.0 - 1e-9)) {
        std::ostringstream w;
        w << "region '" << region.id << "': " << (1.0 - covered / region_area)
          << " of its area lies outside the grid; weights renormalized";
        map.warnings.push_back(w.str());
      }
    }

    AggregationMap::Row row = detail::finalize_row(acc);
    double d = 0.0;
    for (const double w : row.weights) d += w * w;
    map.D_h_diag[map.n_b()] = d;
    map.rows.push_back(std::move(row));
    map.region_ids.push_back(region.id);
    map.areas.push_back(region_area);
  }
  return map;
}

/// Assemble y_B in AggregationMap row order from an id -> value table.
inline Eigen::VectorXd outcome_vector(const AggregationMap& map,
                                      const std::unordered_map<std::string, double>& values) {
  Eigen::VectorXd y(map.n_b());
  std::vector<std::string> missing;
  for (int l = 0; l < map.n_b(); ++l) {
    const auto it = values.find(map.region_ids[l]);
    if (it == values.end()) {
      missing.push_back(map.region_ids[l]);
    } else {
      y[l] = it->second;
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing outcome for region(s):";
    for (const auto& id : missing) msg += " " + id;
    throw MissingOutcome(msg);
  }
  return y;
}

}  // namespace cosgp::supports
