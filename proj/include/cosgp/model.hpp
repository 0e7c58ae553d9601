#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <variant>

#include "cosgp/covariance.hpp"
#include "cosgp/errors.hpp"
#include "cosgp/linalg.hpp"
#include "cosgp/supports.hpp"

namespace cosgp::model {

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Shape/scale parameterization: density ∝ x^{−(shape+1)} e^{−scale/x}.
struct InverseGammaPrior {
  double shape = 2.0;
  double scale = 2.0;

  double log_density(double x) const {
    if (!(x > 0.0) || !std::isfinite(x)) return kNegInf;
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) -
           scale / x;
  }
};

struct UniformPrior {
  double a = 0.006;
  double b = 30.0;

  bool contains(double x) const { return x > a && x < b && std::isfinite(x); }
  double log_density() const { return -std::log(b - a); }
};

struct GaussianBetaPrior {
  Eigen::VectorXd mu;
  Eigen::MatrixXd V;
};

struct FlatBetaPrior {};

struct PriorSpec {
  std::variant<GaussianBetaPrior, FlatBetaPrior> beta;
  InverseGammaPrior tau2;
  InverseGammaPrior sigma2;
  UniformPrior phi;

  bool beta_is_flat() const { return std::holds_alternative<FlatBetaPrior>(beta); }

  /// Defaults: β ~ N(0, 1000·I), τ², σ² ~ IG(2, 2), φ ~ U(0.006, 30).
  static PriorSpec defaults(int n_coef) {
    PriorSpec p;
    p.beta = GaussianBetaPrior{Eigen::VectorXd::Zero(n_coef),
                               1000.0 * Eigen::MatrixXd::Identity(n_coef, n_coef)};
    return p;
  }

  static PriorSpec flat_beta() {
    PriorSpec p;
    p.beta = FlatBetaPrior{};
    return p;
  }

  void validate(int n_coef) const {
    if (!(tau2.shape > 0.0) || !(tau2.scale > 0.0) || !(sigma2.shape > 0.0) ||
        !(sigma2.scale > 0.0)) {
      throw ValidationError("prior: inverse-gamma shape/scale must be > 0");
    }
    if (!(phi.a > 0.0) || !(phi.b > phi.a)) {
      throw ValidationError("prior: phi range requires 0 < a < b");
    }
    if (const auto* g = std::get_if<GaussianBetaPrior>(&beta)) {
      if (g->mu.size() != n_coef || g->V.rows() != n_coef || g->V.cols() != n_coef) {
        throw DimensionMismatch("prior: beta prior dimension != number of coefficients");
      }
      if (!g->V.isApprox(g->V.transpose(), 1e-12)) {
        throw ValidationError("prior: V_beta must be symmetric");
      }
      Eigen::LLT<Eigen::MatrixXd> llt(g->V);
      if (llt.info() != Eigen::Success) {
        throw ValidationError("prior: V_beta must be positive definite");
      }
    }
  }
};

struct HyperParams {
  double sigma2 = 1.0;
  double tau2 = 1.0;
  double phi = 1.0;
};

enum class MarginalKind { gaussian_beta, flat_beta };

inline bool in_support(const PriorSpec& prior, const HyperParams& t) {
  return t.sigma2 > 0.0 && std::isfinite(t.sigma2) && t.tau2 > 0.0 &&
         std::isfinite(t.tau2) && prior.phi.contains(t.phi);
}

inline double log_prior_theta(const PriorSpec& prior, const HyperParams& t) {
  return prior.sigma2.log_density(t.sigma2) + prior.tau2.log_density(t.tau2) +
         prior.phi.log_density();
}

/// Everything the marginal densities and the composition sampler need:
/// the outcome, the aggregated design H·X, D_h, and the φ-independent
/// covariance structure for rebuilding C_B(φ).
struct ModelContext {
  Eigen::VectorXd y_B;
  Eigen::MatrixXd HX;
  Eigen::VectorXd D_h_diag;
  covariance::PairTable cb_builder;
  PriorSpec prior;
  double gamma;

  // cached Gaussian-β pieces (zero-sized when the β prior is flat)
  Eigen::VectorXd prior_mean_y;   // HX μ_β
  Eigen::MatrixXd prior_cov_y;    // HX V_β (HX)ᵀ
  Eigen::MatrixXd prior_V_inv;    // V_β⁻¹
  Eigen::VectorXd prior_V_inv_mu; // V_β⁻¹ μ_β

  int n_b() const { return static_cast<int>(y_B.size()); }
  int n_coef() const { return static_cast<int>(HX.cols()); }
};

inline ModelContext make_context(const supports::FineGrid& grid,
                                 const supports::AggregationMap& map,
                                 Eigen::VectorXd y_B, PriorSpec prior, double gamma) {
  if (y_B.size() != map.n_b()) {
    throw DimensionMismatch("outcome length != number of observed regions");
  }
  if (!(gamma > 0.0)) throw ValidationError("gamma must be > 0");
  prior.validate(static_cast<int>(grid.design.cols()));
  if (prior.beta_is_flat() && map.n_b() < grid.design.cols()) {
    throw ValidationError("flat beta prior needs at least as many regions as coefficients");
  }

  ModelContext ctx{std::move(y_B),
                   map.apply(grid.design),
                   map.D_h_diag,
                   covariance::PairTable(grid, map, gamma),
                   std::move(prior),
                   gamma,
                   {},
                   {},
                   {},
                   {}};
  if (const auto* g = std::get_if<GaussianBetaPrior>(&ctx.prior.beta)) {
    ctx.prior_mean_y = ctx.HX * g->mu;
    ctx.prior_cov_y = ctx.HX * g->V * ctx.HX.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(g->V);
    ctx.prior_V_inv = llt.solve(Eigen::MatrixXd::Identity(g->V.rows(), g->V.cols()));
    ctx.prior_V_inv_mu = llt.solve(g->mu);
  } else {
    ctx.prior_mean_y = Eigen::VectorXd::Zero(ctx.n_b());
  }
  return ctx;
}

/// Log of the unnormalized marginal posterior with the Gaussian β prior
/// integrated out: MVN(y_B | HXμ_β, σ²C_B(φ) + HX V_β (HX)ᵀ + τ²D_h) plus the
/// θ prior terms. Returns −∞ outside the prior support.
inline double log_marginal_gaussian_beta(const ModelContext& ctx, const HyperParams& t) {
  if (ctx.prior.beta_is_flat()) {
    throw ValidationError("context was built with a flat beta prior");
  }
  if (!in_support(ctx.prior, t)) return kNegInf;
  Eigen::MatrixXd V = t.sigma2 * ctx.cb_builder.assemble(t.phi) + ctx.prior_cov_y;
  V.diagonal() += t.tau2 * ctx.D_h_diag;
  const CholPsd chol = chol_psd(V);
  return mvn_logpdf(ctx.y_B, ctx.prior_mean_y, chol) + log_prior_theta(ctx.prior, t);
}

/// Log marginal posterior with β integrated under a flat prior:
///   −(n_b−q)/2·log 2π − ½log|V*| − ½log|XᵀHᵀV*⁻¹HX|
///   − ½(y_BᵀV*⁻¹y_B − μ*_βᵀV*_β⁻¹μ*_β) + log p(θ),
/// with V* = σ²C_B(φ) + τ²D_h and q = p+1. All solves go through Cholesky;
/// the sub-region block structure of V* is exploited when present.
inline double log_marginal_flat_beta(const ModelContext& ctx, const HyperParams& t) {
  if (!in_support(ctx.prior, t)) return kNegInf;
  Eigen::MatrixXd V = t.sigma2 * ctx.cb_builder.assemble(t.phi);
  V.diagonal() += t.tau2 * ctx.D_h_diag;
  const CholPsd chol = chol_psd(V, /*detect_blocks=*/true);

  const Eigen::MatrixXd U = chol.solve_lower(ctx.HX);   // L⁻¹ HX
  const Eigen::VectorXd v = chol.solve_lower(ctx.y_B);  // L⁻¹ y
  const Eigen::MatrixXd G = U.transpose() * U;          // V*_β⁻¹
  const CholPsd gchol = chol_psd(G);
  const Eigen::VectorXd rhs = U.transpose() * v;
  const double quad = v.squaredNorm() - rhs.dot(gchol.solve(rhs));
  const double n_eff = static_cast<double>(ctx.n_b() - ctx.n_coef());
  return -0.5 * n_eff * kLog2Pi - 0.5 * chol.log_det() - 0.5 * gchol.log_det() -
         0.5 * quad + log_prior_theta(ctx.prior, t);
}

inline double log_marginal(const ModelContext& ctx, const HyperParams& t,
                           MarginalKind kind) {
  return kind == MarginalKind::gaussian_beta ? log_marginal_gaussian_beta(ctx, t)
                                             : log_marginal_flat_beta(ctx, t);
}

}  // namespace cosgp::model
