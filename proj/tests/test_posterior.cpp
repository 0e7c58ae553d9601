// Stages 2-5 of the composition sampler: the joint (beta, omega_B) Gaussian
// draw checked against hand-built precision-form moments, the conditional GP
// for prediction supports, the predictive noise stage, and the aggregation
// of predictive draws into group totals.

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "helpers.hpp"

using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace model = cosgp::model;
namespace posterior = cosgp::posterior;
namespace sampler = cosgp::sampler;
namespace supports = cosgp::supports;

namespace {

struct Setup {
  cosgp::supports::FineGrid grid;
  std::vector<supports::SupportRegion> obs_regions, pred_regions;
  supports::AggregationMap obs_map, pred_map;
  VectorXd y;
  double gamma = 0.6;
};

Setup make_setup() {
  Setup s{testutil::lattice_grid(4, 4, 33), {}, {}, {}, {}, {}, 0.6};
  s.obs_regions.push_back(supports::full_pixel_region("B0", {0, 1, 4, 5}));
  s.obs_regions.push_back(supports::full_pixel_region("B1", {2, 3, 6}));
  s.obs_regions.push_back(supports::full_pixel_region("B2", {8, 12, 13}));
  s.pred_regions.push_back(supports::full_pixel_region(
      "U0", {10, 11}, supports::SupportRegion::Role::prediction));
  s.pred_regions.push_back(supports::full_pixel_region(
      "U1", {14, 15}, supports::SupportRegion::Role::prediction));
  s.obs_map = supports::compute_weights(s.grid, s.obs_regions);
  s.pred_map = supports::compute_weights(s.grid, s.pred_regions);
  s.y.resize(3);
  s.y << 1.2, -0.4, 2.1;
  return s;
}

/// Dense H for an aggregation map, straight from the stored rows.
MatrixXd dense_H(const supports::AggregationMap& map, int n_a) {
  MatrixXd H = MatrixXd::Zero(map.n_b(), n_a);
  for (int l = 0; l < map.n_b(); ++l) {
    for (std::size_t j = 0; j < map.rows[l].pixels.size(); ++j) {
      H(l, map.rows[l].pixels[j]) = map.rows[l].weights[j];
    }
  }
  return H;
}

/// Precision-form moments of (beta, omega_B) | theta, y built with plain
/// dense algebra and the brute-force covariance oracle.
void joint_moments(const Setup& s, const model::PriorSpec& prior,
                   const model::HyperParams& t, VectorXd& mean_out, MatrixXd& M_out) {
  const int q = static_cast<int>(s.grid.design.cols());
  const int nb = s.obs_map.n_b();
  const MatrixXd H = dense_H(s.obs_map, s.grid.n_a);
  const MatrixXd HX = H * s.grid.design;
  const MatrixXd CB =
      testutil::aggregated_cov_oracle(s.grid, s.obs_map, s.obs_map, t.phi, s.gamma);
  VectorXd w(nb);
  for (int l = 0; l < nb; ++l) {
    double dh = 0.0;
    for (double wt : s.obs_map.rows[l].weights) dh += wt * wt;
    w[l] = 1.0 / (t.tau2 * dh);
  }
  MatrixXd A(nb, q + nb);
  A.leftCols(q) = HX;
  A.rightCols(nb) = MatrixXd::Identity(nb, nb);
  MatrixXd Minv = A.transpose() * w.asDiagonal() * A;
  Minv.bottomRightCorner(nb, nb) += CB.inverse() / t.sigma2;
  VectorXd m = A.transpose() * (w.asDiagonal() * s.y);
  if (const auto* g = std::get_if<model::GaussianBetaPrior>(&prior.beta)) {
    Minv.topLeftCorner(q, q) += g->V.inverse();
    m.head(q) += g->V.inverse() * g->mu;
  }
  M_out = Minv.inverse();
  mean_out = M_out * m;
}

void check_sample_moments(const model::ModelContext& ctx, const Setup& s,
                          const model::PriorSpec& prior, const model::HyperParams& t) {
  VectorXd mean;
  MatrixXd M;
  joint_moments(s, prior, t, mean, M);

  const int n = 10000;
  const int dim = static_cast<int>(mean.size());
  cosgp::RngStream rng(2025, 17);
  MatrixXd draws(n, dim);
  for (int i = 0; i < n; ++i) {
    auto [beta, omega] = posterior::sample_beta_omega(ctx, t, rng);
    draws.row(i).head(beta.size()) = beta;
    draws.row(i).tail(omega.size()) = omega;
  }
  const VectorXd mhat = draws.colwise().mean();
  for (int j = 0; j < dim; ++j) {
    const double se = std::sqrt(M(j, j) / n);
    INFO("coordinate " << j);
    REQUIRE(std::abs(mhat[j] - mean[j]) < 4.0 * se);
  }
  const MatrixXd centered = draws.rowwise() - mhat.transpose();
  const MatrixXd S = centered.transpose() * centered / (n - 1.0);
  REQUIRE((S - M).norm() < 0.08 * M.norm());
}

}  // namespace

TEST_CASE("composition draw matches analytic joint moments (gaussian beta)", "[posterior]") {
  const Setup s = make_setup();
  const model::PriorSpec prior = model::PriorSpec::defaults(s.grid.p() + 1);
  const auto ctx = model::make_context(s.grid, s.obs_map, s.y, prior, s.gamma);
  check_sample_moments(ctx, s, prior, model::HyperParams{1.5, 0.8, 4.0});
}

TEST_CASE("composition draw matches analytic joint moments (flat beta)", "[posterior]") {
  const Setup s = make_setup();
  model::PriorSpec prior = model::PriorSpec::defaults(s.grid.p() + 1);
  prior.beta = model::FlatBetaPrior{};
  const auto ctx = model::make_context(s.grid, s.obs_map, s.y, prior, s.gamma);
  check_sample_moments(ctx, s, prior, model::HyperParams{1.5, 0.8, 4.0});
}

TEST_CASE("composition rejects theta outside the prior support", "[posterior]") {
  const Setup s = make_setup();
  const auto ctx = model::make_context(s.grid, s.obs_map, s.y,
                                       model::PriorSpec::defaults(s.grid.p() + 1), s.gamma);
  cosgp::RngStream rng(1, 1);
  REQUIRE_THROWS_AS(posterior::sample_beta_omega(ctx, model::HyperParams{1.0, 1.0, 100.0}, rng),
                    cosgp::ValidationError);
  REQUIRE_THROWS_AS(posterior::sample_beta_omega(ctx, model::HyperParams{-1.0, 1.0, 5.0}, rng),
                    cosgp::ValidationError);
}

namespace {

sampler::ThetaDraws short_theta(const model::ModelContext& ctx, std::uint64_t seed) {
  sampler::McmcConfig cfg;
  cfg.n_chains = 1;
  cfg.warmup = 100;
  cfg.sampling = 100;
  cfg.thin = 10;
  cfg.seed = seed;
  return sampler::run_chains(ctx, cfg, model::MarginalKind::gaussian_beta);
}

}  // namespace

TEST_CASE("stage-2 substreams make draw rows independent of batching", "[posterior]") {
  const Setup s = make_setup();
  const auto ctx = model::make_context(s.grid, s.obs_map, s.y,
                                       model::PriorSpec::defaults(s.grid.p() + 1), s.gamma);
  const auto theta = short_theta(ctx, 404);

  const auto full = posterior::sample_beta_omega_all(ctx, theta, 11);
  const auto again = posterior::sample_beta_omega_all(ctx, theta, 11);
  REQUIRE(full.beta == again.beta);
  REQUIRE(full.omega_B == again.omega_B);

  // a two-row subset with matching substream ids reproduces those exact rows
  sampler::ThetaDraws sub;
  sub.n_chains = 1;
  sub.per_chain = 2;
  sub.draws.resize(2, 3);
  sub.draws.row(0) = theta.draws.row(3);
  sub.draws.row(1) = theta.draws.row(7);
  sub.log_post.resize(2);
  sub.chain_ids = {0, 0};
  const auto part = posterior::sample_beta_omega_all(ctx, sub, 11, {3, 7});
  REQUIRE(part.beta.row(0) == full.beta.row(3));
  REQUIRE(part.beta.row(1) == full.beta.row(7));
  REQUIRE(part.omega_B.row(0) == full.omega_B.row(3));
  REQUIRE(part.omega_B.row(1) == full.omega_B.row(7));

  REQUIRE_THROWS_AS(posterior::sample_beta_omega_all(ctx, sub, 11, {1, 2, 3}),
                    cosgp::DimensionMismatch);
}

TEST_CASE("conditional GP moments match the dense formula", "[posterior]") {
  const Setup s = make_setup();
  const model::HyperParams t{1.5, 0.8, 4.0};
  const MatrixXd CB =
      testutil::aggregated_cov_oracle(s.grid, s.obs_map, s.obs_map, t.phi, s.gamma);
  const MatrixXd CBU =
      testutil::aggregated_cov_oracle(s.grid, s.obs_map, s.pred_map, t.phi, s.gamma);
  const MatrixXd CUU =
      testutil::aggregated_cov_oracle(s.grid, s.pred_map, s.pred_map, t.phi, s.gamma);
  VectorXd omega(3);
  omega << 0.5, -1.0, 2.0;

  const auto cond = posterior::omega_pred_conditional(omega, t, CB, CBU, CUU);
  const MatrixXd CBinv = CB.inverse();
  const VectorXd mean = CBU.transpose() * CBinv * omega;
  const MatrixXd cov = t.sigma2 * (CUU - CBU.transpose() * CBinv * CBU);
  REQUIRE((cond.mean - mean).cwiseAbs().maxCoeff() < 1e-9);
  REQUIRE((cond.cov - cov).cwiseAbs().maxCoeff() < 1e-9);

  REQUIRE_THROWS_AS(posterior::omega_pred_conditional(omega, t, CB, CBU.topRows(2), CUU),
                    cosgp::DimensionMismatch);
}

TEST_CASE("predicting the observed supports is exact and noiseless in omega", "[posterior]") {
  const Setup s = make_setup();
  const model::HyperParams t{1.5, 0.8, 4.0};
  const MatrixXd CB =
      testutil::aggregated_cov_oracle(s.grid, s.obs_map, s.obs_map, t.phi, s.gamma);
  cosgp::RngStream rng(7, 3);
  std::mt19937 gen(9);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd omega(3);
    for (int i = 0; i < 3; ++i) omega[i] = 2.0 * nd(gen);
    const auto cond = posterior::omega_pred_conditional(omega, t, CB, CB, CB);
    REQUIRE(cond.cov.diagonal().maxCoeff() <= 1e-10);
    const VectorXd drawn = posterior::sample_omega_pred(omega, t, CB, CB, CB, rng);
    REQUIRE((drawn - omega).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("predictive noise stage adds exactly tau2 * sum of squared weights", "[posterior]") {
  const Setup s = make_setup();
  const MatrixXd pred_design = s.pred_map.apply(s.grid.design);
  VectorXd omega(2), beta(2);
  omega << 0.3, -0.2;
  beta << 1.0, 0.5;
  const VectorXd det = pred_design * beta + omega;

  cosgp::RngStream rng(5, 5);
  const VectorXd exact = posterior::sample_y_pred(omega, beta, 0.0, s.pred_map, pred_design, rng);
  REQUIRE((exact - det).cwiseAbs().maxCoeff() == 0.0);

  const double tau2 = 2.0;
  const int n = 20000;
  MatrixXd ys(n, 2);
  for (int i = 0; i < n; ++i) {
    ys.row(i) = posterior::sample_y_pred(omega, beta, tau2, s.pred_map, pred_design, rng);
  }
  for (int k = 0; k < 2; ++k) {
    double dh = 0.0;
    for (double wt : s.pred_map.rows[k].weights) dh += wt * wt;
    const double want = tau2 * dh;
    const double mean = ys.col(k).mean();
    const double var = (ys.col(k).array() - mean).square().sum() / (n - 1);
    REQUIRE(std::abs(mean - det[k]) < 4.0 * std::sqrt(want / n));
    REQUIRE(var == Approx(want).epsilon(0.05));
  }

  VectorXd bad(3);
  REQUIRE_THROWS_AS(posterior::sample_y_pred(bad, beta, 1.0, s.pred_map, pred_design, rng),
                    cosgp::DimensionMismatch);
}

TEST_CASE("predict_regions is seed-reproducible and batching-invariant", "[posterior]") {
  const Setup s = make_setup();
  const auto ctx = model::make_context(s.grid, s.obs_map, s.y,
                                       model::PriorSpec::defaults(s.grid.p() + 1), s.gamma);
  const auto theta = short_theta(ctx, 321);
  const auto post = posterior::sample_beta_omega_all(ctx, theta, 55);

  const auto a = posterior::predict_regions(ctx, s.grid, s.obs_map, s.pred_map, post, 66);
  const auto b = posterior::predict_regions(ctx, s.grid, s.obs_map, s.pred_map, post, 66);
  REQUIRE(a.y_u == b.y_u);
  REQUIRE(a.omega_u == b.omega_u);
  REQUIRE(a.region_ids == std::vector<std::string>{"U0", "U1"});

  const auto c = posterior::predict_regions(ctx, s.grid, s.obs_map, s.pred_map, post, 67);
  REQUIRE(a.y_u != c.y_u);

  // a one-draw slice with the matching substream id reproduces that row
  posterior::PosteriorDraws slice;
  slice.beta = post.beta.row(4);
  slice.omega_B = post.omega_B.row(4);
  slice.theta.n_chains = 1;
  slice.theta.per_chain = 1;
  slice.theta.draws = post.theta.draws.row(4);
  slice.theta.log_post.resize(1);
  slice.theta.chain_ids = {0};
  const auto d = posterior::predict_regions(ctx, s.grid, s.obs_map, s.pred_map, slice, 66, {4});
  REQUIRE(d.y_u.row(0) == a.y_u.row(4));
  REQUIRE(d.omega_u.row(0) == a.omega_u.row(4));
}

TEST_CASE("group totals weight predictive draws by region area", "[posterior]") {
  // Unit-cell grid so region areas are plain pixel counts: 2, 1, 3.
  MatrixXd preds = MatrixXd::Zero(12, 1);
  const auto grid = supports::make_lattice_grid(3, 4, 1.0, 0.5, 0.5, preds);
  std::vector<supports::SupportRegion> regions;
  regions.push_back(supports::full_pixel_region("r0", {0, 1},
                                                supports::SupportRegion::Role::prediction));
  regions.push_back(supports::full_pixel_region("r1", {2},
                                                supports::SupportRegion::Role::prediction));
  regions.push_back(supports::full_pixel_region("r2", {4, 5, 6},
                                                supports::SupportRegion::Role::prediction));
  const auto pred_map = supports::compute_weights(grid, regions);
  REQUIRE(pred_map.areas[0] == Approx(2.0));
  REQUIRE(pred_map.areas[1] == Approx(1.0));
  REQUIRE(pred_map.areas[2] == Approx(3.0));

  posterior::PredictiveDraws draws;
  draws.region_ids = {"r0", "r1", "r2"};
  draws.y_u.resize(2, 3);
  draws.y_u << 1.0, 2.0, 3.0,  //
      4.0, 5.0, 6.0;
  draws.omega_u = draws.y_u;

  const std::map<std::string, std::string> grouping{
      {"r0", "g"}, {"r1", "g"}, {"r2", "h"}};
  const auto totals = posterior::aggregate_totals(draws, pred_map, grouping);
  REQUIRE(totals.size() == 2);
  REQUIRE(totals.at("g")[0] == Approx(2.0 * 1.0 + 1.0 * 2.0));
  REQUIRE(totals.at("g")[1] == Approx(2.0 * 4.0 + 1.0 * 5.0));
  REQUIRE(totals.at("h")[0] == Approx(3.0 * 3.0));
  REQUIRE(totals.at("h")[1] == Approx(3.0 * 6.0));

  const std::map<std::string, std::string> partial{{"r2", "solo"}};
  const auto one = posterior::aggregate_totals(draws, pred_map, partial);
  REQUIRE(one.size() == 1);
  REQUIRE(one.at("solo")[1] == Approx(18.0));

  const std::map<std::string, std::string> bad{{"missing", "g"}};
  REQUIRE_THROWS_AS(posterior::aggregate_totals(draws, pred_map, bad), cosgp::UnknownGroup);
}
