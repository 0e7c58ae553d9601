#pragma once

// Shared fixtures for the test suite: deterministic toy grids/regions,
// brute-force reference implementations ("oracles") kept deliberately
// independent of the library's optimized code paths, and a temp-dir guard.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <cosgp/cosgp.hpp>

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Row-major lattice grid on [0,1]² with deterministic pseudo-random
/// predictors (independent of the library RNG).
inline cosgp::supports::FineGrid lattice_grid(int n_rows, int n_cols, unsigned seed = 42,
                                              int n_predictors = 1) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd preds(n_rows * n_cols, n_predictors);
  for (int i = 0; i < preds.rows(); ++i) {
    for (int j = 0; j < n_predictors; ++j) preds(i, j) = nd(gen);
  }
  const double h = 1.0 / std::max(n_rows, n_cols);
  return cosgp::supports::make_lattice_grid(n_rows, n_cols, h, 0.5 * h, 0.5 * h, preds);
}

/// Brute-force tapered correlation between two pixels.
inline double corr_oracle(const cosgp::supports::FineGrid& grid, int i, int j, double phi,
                          double gamma) {
  const double dx = grid.centroids(i, 0) - grid.centroids(j, 0);
  const double dy = grid.centroids(i, 1) - grid.centroids(j, 1);
  const double d = std::sqrt(dx * dx + dy * dy);
  double taper = 1.0;
  if (std::isfinite(gamma)) {
    if (d >= gamma) return 0.0;
    const double u = 1.0 - d / gamma;
    taper = u * u * u * u * (1.0 + 4.0 * d / gamma);
  }
  return std::exp(-phi * d) * taper;
}

/// Brute-force aggregated covariance H_row C H_colᵀ via the dense weight
/// matrices — O(n_b² n_a²), fine for toy sizes.
inline MatrixXd aggregated_cov_oracle(const cosgp::supports::FineGrid& grid,
                                      const cosgp::supports::AggregationMap& rows,
                                      const cosgp::supports::AggregationMap& cols,
                                      double phi, double gamma) {
  MatrixXd out = MatrixXd::Zero(rows.n_b(), cols.n_b());
  for (int l = 0; l < rows.n_b(); ++l) {
    for (int k = 0; k < cols.n_b(); ++k) {
      double s = 0.0;
      for (std::size_t a = 0; a < rows.rows[l].pixels.size(); ++a) {
        for (std::size_t b = 0; b < cols.rows[k].pixels.size(); ++b) {
          s += rows.rows[l].weights[a] * cols.rows[k].weights[b] *
               corr_oracle(grid, rows.rows[l].pixels[a], cols.rows[k].pixels[b], phi, gamma);
        }
      }
      out(l, k) = s;
    }
  }
  return out;
}

/// A random small instance: disjoint membership regions over a lattice grid,
/// with synthetic outcomes. Used by the density-oracle and sampler tests.
struct Instance {
  cosgp::supports::FineGrid grid;
  std::vector<cosgp::supports::SupportRegion> regions;
  cosgp::supports::AggregationMap map;
  VectorXd y;
  double gamma;
};

inline Instance random_instance(std::mt19937& gen, int max_nb = 4, int max_side = 4,
                                double gamma = 0.6) {
  std::uniform_int_distribution<int> side_d(2, max_side);
  const int n_rows = side_d(gen), n_cols = side_d(gen);
  const int n_a = n_rows * n_cols;
  std::uniform_int_distribution<int> nb_d(1, std::min(max_nb, n_a));
  const int n_b = nb_d(gen);

  Instance inst;
  inst.gamma = gamma;
  inst.grid = lattice_grid(n_rows, n_cols, gen());

  // partition a random subset of pixels into n_b disjoint groups
  std::vector<int> pixels(n_a);
  for (int i = 0; i < n_a; ++i) pixels[i] = i;
  std::shuffle(pixels.begin(), pixels.end(), gen);
  std::uniform_int_distribution<int> size_d(1, std::max(1, n_a / n_b));
  std::size_t next = 0;
  for (int l = 0; l < n_b; ++l) {
    int want = size_d(gen);
    std::vector<int> members;
    while (want-- > 0 && next < pixels.size() - static_cast<std::size_t>(n_b - 1 - l)) {
      members.push_back(pixels[next++]);
    }
    if (members.empty()) members.push_back(pixels[next++]);
    inst.regions.push_back(
        cosgp::supports::full_pixel_region("r" + std::to_string(l), std::move(members)));
  }
  inst.map = cosgp::supports::compute_weights(inst.grid, inst.regions);

  std::normal_distribution<double> nd(0.0, 1.0);
  inst.y.resize(n_b);
  for (int l = 0; l < n_b; ++l) inst.y[l] = 1.0 + nd(gen);
  return inst;
}

/// Dense log MVN density, written independently of cosgp::mvn_logpdf.
inline double dense_mvn_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  const Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd r = x - mean;
  const VectorXd half = llt.matrixL().solve(r);
  double log_det = 0.0;
  for (int i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (x.size() * std::log(2.0 * M_PI) + log_det + half.squaredNorm());
}

/// Relative closeness for log-densities: |a−b| ≤ tol·max(1,|b|).
inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

/// Dense pixel-level tapered correlation matrix (independent oracle path).
inline MatrixXd pixel_corr(const cosgp::supports::FineGrid& grid, double phi, double gamma) {
  MatrixXd c(grid.n_a, grid.n_a);
  for (int i = 0; i < grid.n_a; ++i) {
    for (int j = 0; j < grid.n_a; ++j) c(i, j) = corr_oracle(grid, i, j, phi, gamma);
  }
  return c;
}

/// Hand-written hyperparameter prior log-density (inverse-gamma ×2 + uniform),
/// mirroring the library's convention but derived from the textbook formulas.
inline double theta_prior_oracle(const cosgp::model::PriorSpec& prior, double sigma2,
                                 double tau2, double phi) {
  auto ig = [](double shape, double scale, double x) {
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) -
           scale / x;
  };
  if (!(phi > prior.phi.a && phi < prior.phi.b)) {
    return -std::numeric_limits<double>::infinity();
  }
  return ig(prior.sigma2.shape, prior.sigma2.scale, sigma2) +
         ig(prior.tau2.shape, prior.tau2.scale, tau2) - std::log(prior.phi.b - prior.phi.a);
}

/// Full-joint Gaussian marginalization oracle: builds y's covariance from the
/// pixel-level model (GP + i.i.d. fine-scale noise + β prior), valid for the
/// disjoint regions produced by random_instance.
inline double gaussian_marginal_oracle(const Instance& inst,
                                       const cosgp::model::PriorSpec& prior, double sigma2,
                                       double tau2, double phi) {
  const MatrixXd H = inst.map.dense(inst.grid.n_a);
  const MatrixXd HX = H * inst.grid.design;
  const auto& g = std::get<cosgp::model::GaussianBetaPrior>(prior.beta);
  const MatrixXd cov = sigma2 * H * pixel_corr(inst.grid, phi, inst.gamma) * H.transpose() +
                       HX * g.V * HX.transpose() + tau2 * H * H.transpose();
  const VectorXd mean = HX * g.mu;
  return dense_mvn_logpdf(inst.y, mean, cov) + theta_prior_oracle(prior, sigma2, tau2, phi);
}

/// Physicists' Gauss–Hermite rule (weight e^{−x²}) via the Golub–Welsch
/// eigenvalue method.
struct GaussHermite {
  VectorXd nodes, weights;
};

inline GaussHermite gauss_hermite(int n) {
  MatrixXd jacobi = MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double off = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = jacobi(i - 1, i) = off;
  }
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(jacobi);
  GaussHermite out;
  out.nodes = es.eigenvalues();
  out.weights.resize(n);
  const double mu0 = std::sqrt(M_PI);  // ∫ e^{−x²} dx
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    out.weights[i] = mu0 * v0 * v0;
  }
  return out;
}

/// Numerical-quadrature oracle for the flat-β marginal: log ∫ N(y | HXβ, V*) dβ
/// over β ∈ R^q via tensor Gauss–Hermite (q ≤ 2), plus the θ prior. The grid is
/// centered at the GLS solution but deliberately shifted and over-widened so
/// the sum genuinely explores the integrand.
inline double flat_marginal_quadrature_oracle(const Instance& inst,
                                              const cosgp::model::PriorSpec& prior,
                                              double sigma2, double tau2, double phi,
                                              int n_nodes = 48) {
  const MatrixXd H = inst.map.dense(inst.grid.n_a);
  const MatrixXd A = H * inst.grid.design;  // HX
  const int q = static_cast<int>(A.cols());
  const MatrixXd vstar = sigma2 * H * pixel_corr(inst.grid, phi, inst.gamma) * H.transpose() +
                         tau2 * H * H.transpose();
  const Eigen::LLT<MatrixXd> vllt(vstar);
  const MatrixXd w_a = vllt.solve(A);
  const MatrixXd fisher = A.transpose() * w_a;           // AᵀV*⁻¹A
  const Eigen::LLT<MatrixXd> fllt(fisher);
  const VectorXd center_exact = fllt.solve(A.transpose() * vllt.solve(inst.y));
  const MatrixXd sigma_hat = fllt.solve(MatrixXd::Identity(q, q));
  const MatrixXd scale = 1.3 * MatrixXd(Eigen::LLT<MatrixXd>(sigma_hat).matrixL());
  const VectorXd center = center_exact + 0.2 * scale * VectorXd::Ones(q);

  const GaussHermite gh = gauss_hermite(n_nodes);
  auto log_f = [&](const VectorXd& beta) {
    return dense_mvn_logpdf(inst.y, A * beta, vstar);
  };

  // log ∫ f dβ = log Σ_t w_t e^{|t|²} f(center + √2·scale·t) + log((√2)^q |scale|)
  std::vector<double> terms;
  if (q == 1) {
    terms.reserve(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      VectorXd t(1);
      t << gh.nodes[i];
      terms.push_back(std::log(gh.weights[i]) + t.squaredNorm() +
                      log_f(center + std::sqrt(2.0) * scale * t));
    }
  } else if (q == 2) {
    terms.reserve(static_cast<std::size_t>(n_nodes) * n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
      for (int j = 0; j < n_nodes; ++j) {
        VectorXd t(2);
        t << gh.nodes[i], gh.nodes[j];
        terms.push_back(std::log(gh.weights[i]) + std::log(gh.weights[j]) + t.squaredNorm() +
                        log_f(center + std::sqrt(2.0) * scale * t));
      }
    }
  } else {
    throw std::runtime_error("quadrature oracle supports q <= 2");
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (const double t : terms) s += std::exp(t - m);
  double log_det_scale = 0.0;
  for (int i = 0; i < q; ++i) log_det_scale += std::log(scale(i, i));
  return m + std::log(s) + 0.5 * q * std::log(2.0) + log_det_scale +
         theta_prior_oracle(prior, sigma2, tau2, phi);
}

/// RAII temp directory under the system temp path.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / ("cosgp_" + tag + "_" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("cannot create temp dir for tag " + tag);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace testutil
