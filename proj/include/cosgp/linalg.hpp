#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cosgp/errors.hpp"

namespace cosgp {

/// Cholesky factorization of a symmetric positive semidefinite matrix with
/// an escalating diagonal jitter: 0, then {1e-10, 1e-8, 1e-6} times the mean
/// diagonal. Throws NotPSD past the last rung.
///
/// When `detect_blocks` is set, connected components of the nonzero pattern
/// are factored independently. Compactly supported (tapered) covariances
/// over well-separated region clusters decouple into exact diagonal blocks,
/// and every operation below then runs per block. The implied global factor
/// L (block factors placed at their original indices) still satisfies
/// L L^T = A + jitter I.
class CholPsd {
public:
  double jitter() const { return jitter_; }
  int dim() const { return dim_; }
  int n_blocks() const { return static_cast<int>(blocks_.size()); }

  double log_det() const {
    double s = 0.0;
    for (const auto& b : blocks_) {
      s += 2.0 * b.factor.diagonal().array().log().sum();
    }
    return s;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd out(dim_);
    for (const auto& b : blocks_) {
      Eigen::VectorXd sub = gather(rhs, b.index);
      b.factor.triangularView<Eigen::Lower>().solveInPlace(sub);
      b.factor.triangularView<Eigen::Lower>().transpose().solveInPlace(sub);
      scatter(sub, b.index, out);
    }
    return out;
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd out(dim_, rhs.cols());
    for (const auto& b : blocks_) {
      Eigen::MatrixXd sub = gather(rhs, b.index);
      b.factor.triangularView<Eigen::Lower>().solveInPlace(sub);
      b.factor.triangularView<Eigen::Lower>().transpose().solveInPlace(sub);
      scatter(sub, b.index, out);
    }
    return out;
  }

  /// L^-1 B (rows of B indexed like A).
  Eigen::MatrixXd solve_lower(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd out(dim_, rhs.cols());
    for (const auto& b : blocks_) {
      Eigen::MatrixXd sub = gather(rhs, b.index);
      b.factor.triangularView<Eigen::Lower>().solveInPlace(sub);
      scatter(sub, b.index, out);
    }
    return out;
  }

  /// L^-T z; applied to a standard normal vector this draws from N(0, A^-1).
  Eigen::VectorXd solve_lower_transpose(const Eigen::VectorXd& z) const {
    Eigen::VectorXd out(dim_);
    for (const auto& b : blocks_) {
      Eigen::VectorXd sub = gather(z, b.index);
      b.factor.triangularView<Eigen::Lower>().transpose().solveInPlace(sub);
      scatter(sub, b.index, out);
    }
    return out;
  }

  /// L z; applied to a standard normal vector this draws from N(0, A).
  Eigen::VectorXd mul_lower(const Eigen::VectorXd& z) const {
    Eigen::VectorXd out(dim_);
    for (const auto& b : blocks_) {
      Eigen::VectorXd sub = b.factor.triangularView<Eigen::Lower>() * gather(z, b.index);
      scatter(sub, b.index, out);
    }
    return out;
  }

  Eigen::MatrixXd inverse() const {
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim_, dim_);
    return solve(eye);
  }

  friend CholPsd chol_psd(const Eigen::MatrixXd&, bool);

private:
  struct Block {
    std::vector<int> index;
    Eigen::MatrixXd factor;  // lower triangular
  };

  static Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
    return out;
  }
  static Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(idx.size(), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(k) = m.row(idx[k]);
    return out;
  }
  static void scatter(const Eigen::VectorXd& sub, const std::vector<int>& idx,
                      Eigen::VectorXd& out) {
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = sub[k];
  }
  static void scatter(const Eigen::MatrixXd& sub, const std::vector<int>& idx,
                      Eigen::MatrixXd& out) {
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(idx[k]) = sub.row(k);
  }

  std::vector<Block> blocks_;
  int dim_ = 0;
  double jitter_ = 0.0;
};

namespace linalg_detail {

inline std::vector<std::vector<int>> nonzero_components(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (int j = 0; j < n; ++j) {
    for (int i = j + 1; i < n; ++i) {
      if (m(i, j) != 0.0) {
        parent[find(i)] = find(j);
      }
    }
  }
  std::vector<std::vector<int>> comps(n);
  for (int i = 0; i < n; ++i) comps[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& c : comps) {
    if (!c.empty()) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace linalg_detail

inline CholPsd chol_psd(const Eigen::MatrixXd& m, bool detect_blocks = false) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("chol_psd: matrix is not square");
  }
  const int n = static_cast<int>(m.rows());
  CholPsd result;
  result.dim_ = n;
  if (n == 0) return result;

  std::vector<std::vector<int>> comps;
  if (detect_blocks) {
    comps = linalg_detail::nonzero_components(m);
  } else {
    comps.emplace_back(n);
    std::iota(comps.front().begin(), comps.front().end(), 0);
  }

  const double mean_diag = m.diagonal().mean();
  const double rungs[] = {0.0, 1e-10, 1e-8, 1e-6};
  for (const double rung : rungs) {
    const double jitter = rung * mean_diag;
    std::vector<CholPsd::Block> blocks;
    blocks.reserve(comps.size());
    bool ok = true;
    for (const auto& idx : comps) {
      const int k = static_cast<int>(idx.size());
      Eigen::MatrixXd sub(k, k);
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) sub(a, b) = m(idx[a], idx[b]);
      }
      sub.diagonal().array() += jitter;
      Eigen::LLT<Eigen::MatrixXd> llt(sub);
      if (llt.info() != Eigen::Success) {
        ok = false;
        break;
      }
      blocks.push_back({idx, llt.matrixL()});
    }
    if (ok) {
      result.blocks_ = std::move(blocks);
      result.jitter_ = jitter;
      return result;
    }
  }
  throw NotPSD("factorization failed at maximum jitter (dim " + std::to_string(n) + ")");
}

/// Log density of N(mean, A) at x, given the factorization of A.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const CholPsd& chol) {
  static constexpr double kLog2Pi = 1.8378770664093454836;
  const Eigen::VectorXd r = x - mean;
  const Eigen::VectorXd half = chol.solve_lower(r);
  return -0.5 * (chol.dim() * kLog2Pi + chol.log_det() + half.squaredNorm());
}

/// Equal-tailed empirical quantile by linear interpolation between order
/// statistics: position h = (n-1)p, value x[floor(h)] + frac(h) * diff.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw EmptyInput("quantile of empty sample");
  if (sorted.size() == 1) return sorted.front();
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace cosgp
