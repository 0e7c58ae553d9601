#pragma once

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cosgp/block.hpp"
#include "cosgp/errors.hpp"
#include "cosgp/model.hpp"
#include "cosgp/posterior.hpp"
#include "cosgp/sampler.hpp"
#include "cosgp/supports.hpp"

namespace cosgp::workflow {

enum class Method { cos, block };

inline const char* method_name(Method m) { return m == Method::cos ? "cos" : "block"; }

struct MethodConfig {
  Method method = Method::cos;
  double gamma = 1.0;   // taper range for cos; block mode applies no taper
  int block_factor = 1; // coarse cell side (in fine pixels) for block mode
  std::optional<model::PriorSpec> prior;  // default: PriorSpec::defaults(p+1)
  model::MarginalKind marginal = model::MarginalKind::gaussian_beta;

  double effective_gamma() const {
    return method == Method::block ? std::numeric_limits<double>::infinity() : gamma;
  }
};

struct Dataset {
  supports::FineGrid grid;
  std::vector<supports::SupportRegion> observed;
  Eigen::VectorXd y_B;  // aligned to `observed` order
};

struct FitResult {
  supports::FineGrid grid;  // the modeling grid (coarsened in block mode)
  std::optional<block::BlockGrid> block_grid;
  supports::AggregationMap obs_map;
  model::ModelContext ctx;
  posterior::PosteriorDraws draws;
};

/// Builds the modeling grid, aggregation map, and model context for a dataset
/// without drawing anything. Block mode first coarsens the grid and regions,
/// then uses the identical model code with no taper.
inline FitResult prepare_model(const Dataset& data, const MethodConfig& mcfg) {
  supports::FineGrid grid = data.grid;
  std::vector<supports::SupportRegion> regions = data.observed;
  std::optional<block::BlockGrid> bg;
  if (mcfg.method == Method::block) {
    bg = block::make_block_grid(data.grid, mcfg.block_factor);
    regions = block::remap_regions(*bg, regions);
    grid = bg->grid;
  }
  supports::AggregationMap obs_map = supports::compute_weights(grid, regions);
  const model::PriorSpec prior =
      mcfg.prior ? *mcfg.prior
                 : model::PriorSpec::defaults(static_cast<int>(grid.design.cols()));
  model::ModelContext ctx =
      model::make_context(grid, obs_map, data.y_B, prior, mcfg.effective_gamma());
  return FitResult{std::move(grid), std::move(bg), std::move(obs_map), std::move(ctx), {}};
}

/// Fit either method on a dataset: stage 1 (marginal MCMC over θ) followed by
/// stage 2 (composition draws of β, ω_B).
inline FitResult fit_model(const Dataset& data, const MethodConfig& mcfg,
                           const sampler::McmcConfig& mcmc) {
  FitResult fit = prepare_model(data, mcfg);
  sampler::ThetaDraws theta = sampler::run_chains(fit.ctx, mcmc, mcfg.marginal);
  fit.draws = posterior::sample_beta_omega_all(fit.ctx, std::move(theta), mcmc.seed);
  return fit;
}

/// Stages 4–5 for a set of prediction regions, expressed on the fine grid;
/// block mode remaps them onto the coarse grid first.
inline posterior::PredictiveDraws predict_model(
    const FitResult& fit, std::vector<supports::SupportRegion> pred_regions,
    std::uint64_t seed) {
  if (fit.block_grid) {
    pred_regions = block::remap_regions(*fit.block_grid, pred_regions);
  }
  const supports::AggregationMap pred_map = supports::compute_weights(fit.grid, pred_regions);
  return posterior::predict_regions(fit.ctx, fit.grid, fit.obs_map, pred_map, fit.draws,
                                    seed);
}

/// Prediction-map variant used when the caller needs the map as well (areas
/// for totals, D_h, ...).
inline std::pair<posterior::PredictiveDraws, supports::AggregationMap> predict_model_with_map(
    const FitResult& fit, std::vector<supports::SupportRegion> pred_regions,
    std::uint64_t seed) {
  if (fit.block_grid) {
    pred_regions = block::remap_regions(*fit.block_grid, pred_regions);
  }
  supports::AggregationMap pred_map = supports::compute_weights(fit.grid, pred_regions);
  posterior::PredictiveDraws draws =
      posterior::predict_regions(fit.ctx, fit.grid, fit.obs_map, pred_map, fit.draws, seed);
  return {std::move(draws), std::move(pred_map)};
}

}  // namespace cosgp::workflow
