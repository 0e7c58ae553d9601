#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/linalg.hpp"
#include "cosgp/supports.hpp"

namespace cosgp::covariance {

using cosgp::CholPsd;
using cosgp::chol_psd;

struct KernelConfig {
  double phi = 1.0;    // exponential decay rate
  double gamma = 1.0;  // taper range; +infinity disables the taper

  void validate() const {
    if (!(phi > 0.0)) throw ValidationError("kernel: phi must be > 0");
    if (!(gamma > 0.0)) throw ValidationError("kernel: gamma must be > 0");
  }
};

/// Compactly supported taper C_γ(d) = (1 − d/γ)⁴₊ (1 + 4d/γ); exactly zero
/// for d ≥ γ; identically 1 when γ is infinite.
inline double taper_kernel(double d, double gamma) {
  if (std::isinf(gamma)) return 1.0;
  if (d >= gamma) return 0.0;
  const double u = 1.0 - d / gamma;
  const double u2 = u * u;
  return u2 * u2 * (1.0 + 4.0 * d / gamma);
}

/// Tapered exponential correlation exp(−φd) · C_γ(d).
inline double tapered_corr(double d, const KernelConfig& cfg) {
  const double t = taper_kernel(d, cfg.gamma);
  return t == 0.0 ? 0.0 : std::exp(-cfg.phi * d) * t;
}

/// Precomputed φ-independent structure of an aggregated covariance block:
/// for every structurally nonzero region pair, the contributing pixel-pair
/// weights are merged per distinct centroid distance, so re-assembly at a new
/// φ costs one exp() per distinct distance plus one multiply-add per stored
/// term. Distances on a lattice repeat heavily, which keeps both tables tiny.
class PairTable {
public:
  /// Symmetric table: C_B over one map (also used for C_UU).
  PairTable(const supports::FineGrid& grid, const supports::AggregationMap& map)
      : PairTable(grid, map, map, /*symmetric=*/true,
                  std::numeric_limits<double>::infinity()) {}

  PairTable(const supports::FineGrid& grid, const supports::AggregationMap& map,
            double gamma)
      : PairTable(grid, map, map, /*symmetric=*/true, gamma) {}

  /// Rectangular table: C_BU over (row map, col map).
  PairTable(const supports::FineGrid& grid, const supports::AggregationMap& rows,
            const supports::AggregationMap& cols, double gamma)
      : PairTable(grid, rows, cols, /*symmetric=*/false, gamma) {}

  int n_rows() const { return n_rows_; }
  int n_cols() const { return n_cols_; }
  bool symmetric() const { return symmetric_; }
  double gamma() const { return gamma_; }
  std::size_t n_distances() const { return distances_.size(); }

  /// Stored structurally nonzero entries; for a symmetric table only l ≤ k
  /// pairs are listed.
  std::vector<std::pair<int, int>> pattern() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) out.emplace_back(e.row, e.col);
    return out;
  }

  Eigen::MatrixXd assemble(double phi) const {
    std::vector<double> decay(distances_.size());
    for (std::size_t t = 0; t < distances_.size(); ++t) {
      decay[t] = std::exp(-phi * distances_[t]);
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_rows_, n_cols_);
    for (const Entry& e : entries_) {
      double s = 0.0;
      for (int j = e.offset; j < e.offset + e.count; ++j) {
        s += term_weight_[j] * decay[term_dist_[j]];
      }
      out(e.row, e.col) = s;
      if (symmetric_ && e.row != e.col) out(e.col, e.row) = s;
    }
    return out;
  }

private:
  struct Entry {
    int row, col;
    int offset, count;
  };

  PairTable(const supports::FineGrid& grid, const supports::AggregationMap& rows,
            const supports::AggregationMap& cols, bool symmetric, double gamma)
      : n_rows_(rows.n_b()), n_cols_(cols.n_b()), symmetric_(symmetric), gamma_(gamma) {
    for (const auto& m : {std::cref(rows), std::cref(cols)}) {
      for (const auto& r : m.get().rows) {
        for (const int px : r.pixels) {
          if (px >= grid.n_a) {
            throw RegionOutsideGrid("aggregation map references pixel " +
                                    std::to_string(px) + " beyond the grid");
          }
        }
      }
    }

    const double h = grid.cell_size;
    auto bbox = [&](const supports::AggregationMap& m) {
      std::vector<std::array<int, 4>> b(m.n_b());  // rmin,rmax,cmin,cmax
      for (int l = 0; l < m.n_b(); ++l) {
        auto& bb = b[l];
        bb = {std::numeric_limits<int>::max(), std::numeric_limits<int>::min(),
              std::numeric_limits<int>::max(), std::numeric_limits<int>::min()};
        for (const int px : m.rows[l].pixels) {
          bb[0] = std::min(bb[0], grid.row[px]);
          bb[1] = std::max(bb[1], grid.row[px]);
          bb[2] = std::min(bb[2], grid.col[px]);
          bb[3] = std::max(bb[3], grid.col[px]);
        }
      }
      return b;
    };
    const auto rb = bbox(rows);
    const auto cb = bbox(cols);

    std::unordered_map<std::uint64_t, int> dist_index;
    std::unordered_map<std::uint64_t, double> acc;
    std::vector<std::uint64_t> keys;

    for (int l = 0; l < n_rows_; ++l) {
      const int k0 = symmetric_ ? l : 0;
      for (int k = k0; k < n_cols_; ++k) {
        const int dr = std::max({0, rb[l][0] - cb[k][1], cb[k][0] - rb[l][1]});
        const int dc = std::max({0, rb[l][2] - cb[k][3], cb[k][2] - rb[l][3]});
        if (h * std::sqrt(double(dr) * dr + double(dc) * dc) >= gamma_) continue;

        acc.clear();
        const auto& row_l = rows.rows[l];
        const auto& row_k = cols.rows[k];
        for (std::size_t a = 0; a < row_l.pixels.size(); ++a) {
          const int pa = row_l.pixels[a];
          for (std::size_t b = 0; b < row_k.pixels.size(); ++b) {
            const int pb = row_k.pixels[b];
            const int adr = std::abs(grid.row[pa] - grid.row[pb]);
            const int adc = std::abs(grid.col[pa] - grid.col[pb]);
            const double d = h * std::sqrt(double(adr) * adr + double(adc) * adc);
            const double t = taper_kernel(d, gamma_);
            if (t == 0.0) continue;
            const std::uint64_t key =
                (static_cast<std::uint64_t>(adr) << 32) | static_cast<std::uint32_t>(adc);
            acc[key] += row_l.weights[a] * row_k.weights[b] * t;
          }
        }
        if (acc.empty()) continue;

        keys.clear();
        for (const auto& [key, w] : acc) keys.push_back(key);
        std::sort(keys.begin(), keys.end());

        Entry e{l, k, static_cast<int>(term_dist_.size()), static_cast<int>(keys.size())};
        for (const std::uint64_t key : keys) {
          auto [it, inserted] = dist_index.try_emplace(key, static_cast<int>(distances_.size()));
          if (inserted) {
            const auto adr = static_cast<double>(key >> 32);
            const auto adc = static_cast<double>(key & 0xffffffffu);
            distances_.push_back(h * std::sqrt(adr * adr + adc * adc));
          }
          term_dist_.push_back(it->second);
          term_weight_.push_back(acc[key]);
        }
        entries_.push_back(e);
      }
    }
  }

  int n_rows_, n_cols_;
  bool symmetric_;
  double gamma_;
  std::vector<double> distances_;
  std::vector<Entry> entries_;
  std::vector<int> term_dist_;
  std::vector<double> term_weight_;
};

struct AggregatedCov {
  Eigen::MatrixXd matrix;
  std::vector<std::string> row_regions, col_regions;
  std::vector<std::pair<int, int>> sparsity;  // structurally nonzero entries
};

/// C_B(φ): (i,j) = Σ over pixel pairs h_il h_jk · tapered_corr(d(s_l, s_k)).
/// Correlation scale — the σ² factor is applied by the callers.
inline AggregatedCov build_CB(const supports::FineGrid& grid,
                              const supports::AggregationMap& map,
                              const KernelConfig& cfg) {
  cfg.validate();
  PairTable table(grid, map, cfg.gamma);
  AggregatedCov out;
  out.matrix = table.assemble(cfg.phi);
  out.row_regions = map.region_ids;
  out.col_regions = map.region_ids;
  out.sparsity = table.pattern();
  for (const auto& [l, k] : table.pattern()) {
    if (l != k) out.sparsity.emplace_back(k, l);
  }
  return out;
}

/// C_BU(φ) between an observed map (rows) and a prediction map (columns).
inline AggregatedCov build_cross_cov(const supports::FineGrid& grid,
                                     const supports::AggregationMap& obs_map,
                                     const supports::AggregationMap& pred_map,
                                     const KernelConfig& cfg) {
  cfg.validate();
  PairTable table(grid, obs_map, pred_map, cfg.gamma);
  AggregatedCov out;
  out.matrix = table.assemble(cfg.phi);
  out.row_regions = obs_map.region_ids;
  out.col_regions = pred_map.region_ids;
  out.sparsity = table.pattern();
  return out;
}

}  // namespace cosgp::covariance
