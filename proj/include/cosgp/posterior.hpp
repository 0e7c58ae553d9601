#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/linalg.hpp"
#include "cosgp/model.hpp"
#include "cosgp/rng.hpp"
#include "cosgp/sampler.hpp"

namespace cosgp::posterior {

struct PosteriorDraws {
  sampler::ThetaDraws theta;
  Eigen::MatrixXd beta;     // G x (p+1)
  Eigen::MatrixXd omega_B;  // G x n_b

  int G() const { return static_cast<int>(beta.rows()); }
};

struct PredictiveDraws {
  Eigen::MatrixXd omega_u;  // G x n_p
  Eigen::MatrixXd y_u;      // G x n_p
  std::vector<std::string> region_ids;

  int G() const { return static_cast<int>(y_u.rows()); }
  int n_regions() const { return static_cast<int>(y_u.cols()); }
};

/// One exact draw of (β, ω_B) | θ, y_B from MVN(Mm, M), where
///   M⁻¹ = [XᵀHᵀ; I] (τ²D_h)⁻¹ [HX, I] + blockdiag(V_β⁻¹, σ⁻²C_B(φ)⁻¹)
///   m   = [XᵀHᵀ; I] (τ²D_h)⁻¹ y_B + [V_β⁻¹μ_β; 0].
/// A flat β prior replaces the V_β⁻¹ block (and V_β⁻¹μ_β) with zeros.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_beta_omega(
    const model::ModelContext& ctx, const model::HyperParams& theta, RngStream& rng) {
  if (!model::in_support(ctx.prior, theta)) {
    throw ValidationError("sample_beta_omega: theta outside prior support");
  }
  const int q = ctx.n_coef();
  const int nb = ctx.n_b();
  const int dim = q + nb;

  const Eigen::MatrixXd CB = ctx.cb_builder.assemble(theta.phi);
  const CholPsd cb_chol = chol_psd(CB, /*detect_blocks=*/true);
  const Eigen::VectorXd w = (theta.tau2 * ctx.D_h_diag.array()).inverse().matrix();

  Eigen::MatrixXd Minv(dim, dim);
  const Eigen::MatrixXd WHX = w.asDiagonal() * ctx.HX;
  Minv.topLeftCorner(q, q) = ctx.HX.transpose() * WHX;
  Minv.topRightCorner(q, nb) = WHX.transpose();
  Minv.bottomLeftCorner(nb, q) = WHX;
  Minv.bottomRightCorner(nb, nb) = cb_chol.inverse() / theta.sigma2;
  Minv.bottomRightCorner(nb, nb).diagonal() += w;
  if (!ctx.prior.beta_is_flat()) Minv.topLeftCorner(q, q) += ctx.prior_V_inv;

  Eigen::VectorXd m(dim);
  const Eigen::VectorXd wy = w.cwiseProduct(ctx.y_B);
  m.head(q) = ctx.HX.transpose() * wy;
  m.tail(nb) = wy;
  if (!ctx.prior.beta_is_flat()) m.head(q) += ctx.prior_V_inv_mu;

  const CholPsd mchol = chol_psd(Minv);
  Eigen::VectorXd draw = mchol.solve(m);  // the mean Mm
  Eigen::VectorXd z(dim);
  for (int i = 0; i < dim; ++i) z[i] = rng.next_normal();
  draw += mchol.solve_lower_transpose(z);  // adds N(0, M)
  return {draw.head(q), draw.tail(nb)};
}

/// Stage 2 over all θ draws. Each draw g gets its own RNG substream
/// (seed, "composition", substream[g]); substreams default to g itself, so
/// permuting the θ draws together with their substream ids permutes the
/// output rows identically.
inline PosteriorDraws sample_beta_omega_all(const model::ModelContext& ctx,
                                            sampler::ThetaDraws theta, std::uint64_t seed,
                                            std::vector<std::uint64_t> substreams = {}) {
  const int G = theta.G();
  if (substreams.empty()) {
    substreams.resize(G);
    for (int g = 0; g < G; ++g) substreams[g] = static_cast<std::uint64_t>(g);
  }
  if (static_cast<int>(substreams.size()) != G) {
    throw DimensionMismatch("substream list length != number of draws");
  }
  PosteriorDraws out;
  out.beta.resize(G, ctx.n_coef());
  out.omega_B.resize(G, ctx.n_b());
  for (int g = 0; g < G; ++g) {
    RngStream rng(seed, derive_stream("composition", substreams[g]));
    auto [beta, omega] = sample_beta_omega(ctx, theta.at(g), rng);
    out.beta.row(g) = beta;
    out.omega_B.row(g) = omega;
  }
  out.theta = std::move(theta);
  return out;
}

struct ConditionalGP {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Kriging moments: ω_B^u | ω_B, θ ~ MVN(C_BUᵀC_B⁻¹ω_B, σ²(C_UU − C_BUᵀC_B⁻¹C_BU)).
/// All three matrices are correlation scale; σ² cancels in the mean and
/// multiplies the covariance.
inline ConditionalGP omega_pred_conditional(const Eigen::VectorXd& omega_B,
                                            const model::HyperParams& theta,
                                            const Eigen::MatrixXd& CB,
                                            const Eigen::MatrixXd& CBU,
                                            const Eigen::MatrixXd& CUU) {
  if (CB.rows() != omega_B.size() || CBU.rows() != CB.rows() ||
      CBU.cols() != CUU.rows() || CUU.rows() != CUU.cols()) {
    throw DimensionMismatch("omega_pred_conditional: inconsistent matrix shapes");
  }
  const CholPsd cb_chol = chol_psd(CB, /*detect_blocks=*/true);
  const Eigen::MatrixXd U = cb_chol.solve_lower(CBU);
  const Eigen::VectorXd v = cb_chol.solve_lower(omega_B);
  ConditionalGP out;
  out.mean = U.transpose() * v;
  out.cov = theta.sigma2 * (CUU - U.transpose() * U);
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

inline Eigen::VectorXd sample_omega_pred(const Eigen::VectorXd& omega_B,
                                         const model::HyperParams& theta,
                                         const Eigen::MatrixXd& CB,
                                         const Eigen::MatrixXd& CBU,
                                         const Eigen::MatrixXd& CUU, RngStream& rng) {
  ConditionalGP cond = omega_pred_conditional(omega_B, theta, CB, CBU, CUU);
  // Fully degenerate conditionals (every prediction support already observed)
  // collapse to the mean; tiny negative round-off on the diagonal is clamped.
  const double tiny = 1e-12 * std::max(1.0, theta.sigma2);
  if (cond.cov.diagonal().maxCoeff() <= tiny) return cond.mean;
  for (int i = 0; i < cond.cov.rows(); ++i) {
    if (cond.cov(i, i) < 0.0) cond.cov(i, i) = 0.0;
  }
  const CholPsd chol = chol_psd(cond.cov, /*detect_blocks=*/true);
  Eigen::VectorXd z(cond.mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.next_normal();
  return cond.mean + chol.mul_lower(z);
}

/// Predictive outcome: y(B^u_k) ~ Normal(row k of H^uX·β + ω_u[k], τ²·Σ_i h^u_ki²).
inline Eigen::VectorXd sample_y_pred(const Eigen::VectorXd& omega_u,
                                     const Eigen::VectorXd& beta, double tau2,
                                     const supports::AggregationMap& pred_map,
                                     const Eigen::MatrixXd& pred_design, RngStream& rng) {
  if (pred_design.rows() != omega_u.size() || pred_design.cols() != beta.size() ||
      pred_map.n_b() != omega_u.size()) {
    throw DimensionMismatch("sample_y_pred: inconsistent shapes");
  }
  Eigen::VectorXd y = pred_design * beta + omega_u;
  for (int k = 0; k < y.size(); ++k) {
    y[k] += std::sqrt(tau2 * pred_map.D_h_diag[k]) * rng.next_normal();
  }
  return y;
}

/// Stages 4–5 over all posterior draws for one prediction map. Draw g uses
/// RNG substream (seed, "prediction", substream[g]).
inline PredictiveDraws predict_regions(const model::ModelContext& ctx,
                                       const supports::FineGrid& grid,
                                       const supports::AggregationMap& obs_map,
                                       const supports::AggregationMap& pred_map,
                                       const PosteriorDraws& post, std::uint64_t seed,
                                       std::vector<std::uint64_t> substreams = {}) {
  const int G = post.G();
  if (substreams.empty()) {
    substreams.resize(G);
    for (int g = 0; g < G; ++g) substreams[g] = static_cast<std::uint64_t>(g);
  }
  if (static_cast<int>(substreams.size()) != G) {
    throw DimensionMismatch("substream list length != number of draws");
  }
  const covariance::PairTable cross(grid, obs_map, pred_map, ctx.gamma);
  const covariance::PairTable uu(grid, pred_map, ctx.gamma);
  const Eigen::MatrixXd pred_design = pred_map.apply(grid.design);

  PredictiveDraws out;
  out.region_ids = pred_map.region_ids;
  out.omega_u.resize(G, pred_map.n_b());
  out.y_u.resize(G, pred_map.n_b());
  for (int g = 0; g < G; ++g) {
    const model::HyperParams t = post.theta.at(g);
    RngStream rng(seed, derive_stream("prediction", substreams[g]));
    const Eigen::MatrixXd CB = ctx.cb_builder.assemble(t.phi);
    const Eigen::MatrixXd CBU = cross.assemble(t.phi);
    const Eigen::MatrixXd CUU = uu.assemble(t.phi);
    const Eigen::VectorXd omega = sample_omega_pred(post.omega_B.row(g), t, CB, CBU, CUU, rng);
    out.omega_u.row(g) = omega;
    out.y_u.row(g) = sample_y_pred(omega, post.beta.row(g), t.tau2, pred_map, pred_design, rng);
  }
  return out;
}

/// Per-group totals: Σ over member regions of predicted mean × region area,
/// one total per posterior draw. Regions absent from the grouping are ignored.
inline std::map<std::string, Eigen::VectorXd> aggregate_totals(
    const PredictiveDraws& draws, const supports::AggregationMap& pred_map,
    const std::map<std::string, std::string>& grouping) {
  std::map<std::string, Eigen::VectorXd> totals;
  for (const auto& [region_id, group] : grouping) {
    const int idx = pred_map.index_of(region_id);
    if (idx < 0) {
      throw UnknownGroup("grouping references unknown region '" + region_id + "'");
    }
    auto [it, inserted] = totals.try_emplace(group, Eigen::VectorXd::Zero(draws.G()));
    it->second += pred_map.areas[idx] * draws.y_u.col(idx);
  }
  return totals;
}

}  // namespace cosgp::posterior
