#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/supports.hpp"

namespace cosgp::block {

/// The coarse modeling grid of the Block baseline: a FineGrid at the coarse
/// cell resolution with area-averaged predictors, plus the fine-to-coarse
/// pixel assignment used to remap membership regions.
struct BlockGrid {
  supports::FineGrid grid;
  std::vector<int> cell_of_pixel;  // fine pixel -> coarse pixel index (-1 if none)
  int factor = 1;                  // coarse cell side, in fine pixels
};

struct CoarseCells {
  std::vector<std::vector<int>> members;  // fine pixels per coarse cell
  Eigen::MatrixXd centroids;              // geometric cell centers, n x 2
  double cell_size = 0.0;
};

/// Per-cell predictor = area-weighted mean of the covered fine pixels (equal
/// pixel areas make this the arithmetic mean).
inline BlockGrid upscale_predictors(const supports::FineGrid& fine,
                                    const CoarseCells& cells) {
  const auto n = static_cast<int>(cells.members.size());
  if (n == 0) throw EmptyInput("no coarse cells given");
  if (cells.centroids.rows() != n) {
    throw DimensionMismatch("coarse cell centroid count != cell count");
  }
  Eigen::MatrixXd pred(n, fine.p());
  for (int c = 0; c < n; ++c) {
    const auto& members = cells.members[c];
    if (members.empty()) {
      throw EmptyCell("coarse cell " + std::to_string(c) + " covers no fine pixel");
    }
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(fine.p());
    for (const int px : members) mean += fine.predictors.row(px);
    pred.row(c) = mean / static_cast<double>(members.size());
  }

  BlockGrid out;
  out.grid = supports::make_grid(cells.centroids, pred, cells.cell_size);
  out.cell_of_pixel.assign(fine.n_a, -1);
  for (int c = 0; c < n; ++c) {
    for (const int px : cells.members[c]) out.cell_of_pixel[px] = c;
  }
  return out;
}

/// Tile the fine lattice into factor x factor cells (aligned to the fine
/// lattice origin) and upscale. Cells are ordered row-major by coarse (R,C);
/// cells covering no fine pixel are skipped, so grids with holes coarsen to
/// grids with holes.
inline BlockGrid make_block_grid(const supports::FineGrid& fine, int factor) {
  if (factor < 1) throw ValidationError("block factor must be >= 1");
  const int n_R = (fine.n_rows + factor - 1) / factor;
  const int n_C = (fine.n_cols + factor - 1) / factor;
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_R) * n_C);
  for (int i = 0; i < fine.n_a; ++i) {
    members[static_cast<std::size_t>(fine.row[i] / factor) * n_C + fine.col[i] / factor]
        .push_back(i);
  }

  CoarseCells cells;
  cells.cell_size = factor * fine.cell_size;
  std::vector<Eigen::RowVector2d> centers;
  for (int R = 0; R < n_R; ++R) {
    for (int C = 0; C < n_C; ++C) {
      auto& m = members[static_cast<std::size_t>(R) * n_C + C];
      if (m.empty()) continue;
      cells.members.push_back(std::move(m));
      centers.emplace_back(
          fine.origin_x + (C * factor + 0.5 * (factor - 1)) * fine.cell_size,
          fine.origin_y + (R * factor + 0.5 * (factor - 1)) * fine.cell_size);
    }
  }
  cells.centroids.resize(static_cast<Eigen::Index>(centers.size()), 2);
  for (std::size_t i = 0; i < centers.size(); ++i) cells.centroids.row(i) = centers[i];

  BlockGrid out = upscale_predictors(fine, cells);
  out.factor = factor;
  return out;
}

/// Re-express a region on the coarse grid. Membership lists are converted to
/// coarse fractions |B ∩ cell| / |cell|; polygons pass through unchanged and
/// are clipped against the coarse pixels by compute_weights.
inline supports::SupportRegion remap_region(const BlockGrid& bg,
                                            const supports::SupportRegion& region) {
  if (std::holds_alternative<Polygon>(region.geometry)) return region;
  const auto& mem = std::get<supports::SupportRegion::Membership>(region.geometry);
  const double capacity = static_cast<double>(bg.factor) * bg.factor;
  std::vector<double> frac(static_cast<std::size_t>(bg.grid.n_a), 0.0);
  for (std::size_t k = 0; k < mem.pixels.size(); ++k) {
    const int cell = bg.cell_of_pixel[mem.pixels[k]];
    if (cell < 0) {
      throw ValidationError("region '" + region.id +
                            "' references a fine pixel outside the block grid");
    }
    frac[cell] += mem.fractions[k] / capacity;
  }
  supports::SupportRegion::Membership coarse;
  for (int c = 0; c < bg.grid.n_a; ++c) {
    if (frac[c] > 0.0) {
      coarse.pixels.push_back(c);
      coarse.fractions.push_back(std::min(frac[c], 1.0));
    }
  }
  supports::SupportRegion out;
  out.id = region.id;
  out.role = region.role;
  out.geometry = std::move(coarse);
  return out;
}

inline std::vector<supports::SupportRegion> remap_regions(
    const BlockGrid& bg, const std::vector<supports::SupportRegion>& regions) {
  std::vector<supports::SupportRegion> out;
  out.reserve(regions.size());
  for (const auto& r : regions) out.push_back(remap_region(bg, r));
  return out;
}

}  // namespace cosgp::block
