#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/model.hpp"
#include "cosgp/rng.hpp"

namespace cosgp::sampler {

struct McmcConfig {
  int n_chains = 4;
  int warmup = 500;
  int sampling = 500;
  int thin = 10;
  std::uint64_t seed = 0;
  double target_accept = 0.30;
  std::optional<model::HyperParams> init;  // default: independent prior draws
  bool keep_unthinned = false;

  int per_chain() const { return sampling / thin; }
  int total_draws() const { return n_chains * per_chain(); }

  void validate() const {
    if (n_chains < 1 || warmup < 1 || sampling < 1 || thin < 1) {
      throw ValidationError("mcmc: chains, warmup, sampling, thin must be positive");
    }
    if (sampling % thin != 0) {
      throw ValidationError("mcmc: thin must divide the sampling iteration count");
    }
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw ValidationError("mcmc: target_accept must be in (0,1)");
    }
  }
};

struct Diagnostics {
  std::array<double, 3> rhat{};  // sigma2, tau2, phi
  std::array<double, 3> ess{};
  std::vector<std::string> warnings;
  bool computed = false;
};

struct ThetaDraws {
  Eigen::MatrixXd draws;      // G x 3: sigma2, tau2, phi (chain-major order)
  Eigen::VectorXd log_post;   // marginal log posterior at each draw
  std::vector<int> chain_ids; // length G
  std::vector<double> acceptance_rate;  // per chain, sampling phase
  int n_chains = 0;
  int per_chain = 0;
  Diagnostics diag;
  Eigen::MatrixXd unthinned;  // optional: all post-warmup states, 3 columns

  int G() const { return static_cast<int>(draws.rows()); }

  model::HyperParams at(int g) const {
    return {draws(g, 0), draws(g, 1), draws(g, 2)};
  }
};

/// Map between θ = (σ², τ², φ) and unconstrained z, with the log-Jacobian of
/// θ(z): z = (log σ², log τ², logit((φ−a)/(b−a))).
struct ThetaTransform {
  double a, b;

  Eigen::Vector3d to_z(const model::HyperParams& t) const {
    const double u = (t.phi - a) / (b - a);
    return {std::log(t.sigma2), std::log(t.tau2), std::log(u) - std::log1p(-u)};
  }

  model::HyperParams to_theta(const Eigen::Vector3d& z) const {
    const double u = 1.0 / (1.0 + std::exp(-z[2]));
    return {std::exp(z[0]), std::exp(z[1]), a + (b - a) * u};
  }

  double log_jacobian(const Eigen::Vector3d& z) const {
    auto softplus = [](double x) {
      return x > 30.0 ? x : std::log1p(std::exp(x));
    };
    // d phi/dz2 = (b-a)·u(1-u); log u = −softplus(−z), log(1−u) = −softplus(z)
    return z[0] + z[1] + std::log(b - a) - softplus(-z[2]) - softplus(z[2]);
  }
};

struct RwmOptions {
  int warmup = 500;
  int iters = 500;
  int thin = 1;
  double target_accept = 0.30;
  bool keep_all = false;
};

struct RwmRun {
  Eigen::MatrixXd thinned;    // kept states (z coordinates)
  Eigen::VectorXd log_target; // target value at kept states
  double acceptance_rate = 0.0;
  Eigen::MatrixXd all;        // post-warmup states when keep_all
};

/// Adaptive random-walk Metropolis on R^dim. During warm-up the proposal is
/// scaled by Robbins–Monro toward the target acceptance rate and its shape is
/// replaced by the running empirical covariance after iteration 100; both are
/// frozen for the sampling phase.
inline RwmRun adaptive_rwm(const std::function<double(const Eigen::VectorXd&)>& target,
                           Eigen::VectorXd init, const RwmOptions& opt, RngStream& rng) {
  const int dim = static_cast<int>(init.size());
  Eigen::VectorXd z = std::move(init);
  double lp = target(z);
  if (!std::isfinite(lp)) {
    throw NonFinite("adaptive_rwm: target is not finite at the initial state");
  }

  double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
  Eigen::MatrixXd prop_chol = Eigen::MatrixXd::Identity(dim, dim);

  // running moments for covariance adaptation
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(dim, dim);
  long n_seen = 0;

  RwmRun run;
  const int kept = opt.iters / opt.thin;
  run.thinned.resize(kept, dim);
  run.log_target.resize(kept);
  if (opt.keep_all) run.all.resize(opt.iters, dim);

  long accepted_sampling = 0;
  int out = 0;
  Eigen::VectorXd xi(dim), zprop(dim);

  for (int t = 1; t <= opt.warmup + opt.iters; ++t) {
    for (int k = 0; k < dim; ++k) xi[k] = rng.next_normal();
    zprop = z + std::exp(log_scale) * (prop_chol * xi);
    const double lp_prop = target(zprop);
    const double log_alpha = lp_prop - lp;
    const double alpha = std::isfinite(lp_prop) ? std::min(1.0, std::exp(log_alpha)) : 0.0;
    if (alpha > 0.0 && rng.next_double() < alpha) {
      z = zprop;
      lp = lp_prop;
      if (t > opt.warmup) ++accepted_sampling;
    }

    if (t <= opt.warmup) {
      log_scale += std::pow(static_cast<double>(t), -0.6) * (alpha - opt.target_accept);
      ++n_seen;
      const Eigen::VectorXd delta = z - mean;
      mean += delta / static_cast<double>(n_seen);
      m2 += delta * (z - mean).transpose();
      if (t >= 100 && t % 25 == 0 && n_seen > dim) {
        Eigen::MatrixXd cov = m2 / static_cast<double>(n_seen - 1);
        cov.diagonal().array() += 1e-8 + 1e-6 * cov.diagonal().mean();
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() == Eigen::Success) prop_chol = llt.matrixL();
      }
    } else {
      const int i = t - opt.warmup;
      if (opt.keep_all) run.all.row(i - 1) = z;
      if (i % opt.thin == 0) {
        run.thinned.row(out) = z;
        run.log_target[out] = lp;
        ++out;
      }
    }
  }
  run.acceptance_rate = static_cast<double>(accepted_sampling) / opt.iters;
  return run;
}

namespace detail {

inline double split_rhat(const std::vector<Eigen::VectorXd>& seqs, double& w_out,
                         double& varhat_out) {
  const auto k = seqs.size();
  const auto m = static_cast<double>(seqs.front().size());
  Eigen::VectorXd means(k), vars(k);
  for (std::size_t j = 0; j < k; ++j) {
    means[j] = seqs[j].mean();
    vars[j] = (seqs[j].array() - means[j]).square().sum() / (m - 1.0);
  }
  const double w = vars.mean();
  const double grand = means.mean();
  const double b = m * (means.array() - grand).square().sum() /
                   static_cast<double>(k - 1);
  const double varhat = (m - 1.0) / m * w + b / m;
  w_out = w;
  varhat_out = varhat;
  if (w < 1e-300) return b < 1e-300 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(varhat / w);
}

inline double bulk_ess(const std::vector<Eigen::VectorXd>& seqs, double w, double varhat) {
  const auto k = static_cast<double>(seqs.size());
  const auto m = static_cast<Eigen::Index>(seqs.front().size());
  if (varhat < 1e-300) return k * static_cast<double>(m);
  // mean autocovariance across sequences, biased 1/m normalization
  std::vector<double> acov(m, 0.0);
  for (const auto& s : seqs) {
    const double mu = s.mean();
    for (Eigen::Index t = 0; t < m; ++t) {
      double a = 0.0;
      for (Eigen::Index i = 0; i + t < m; ++i) a += (s[i] - mu) * (s[i + t] - mu);
      acov[t] += a / static_cast<double>(m);
    }
  }
  for (auto& a : acov) a /= k;

  // Geyer initial monotone positive sequence on paired correlations
  std::vector<double> rho(m, 0.0);
  for (Eigen::Index t = 1; t < m; ++t) rho[t] = 1.0 - (w - acov[t]) / varhat;
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 1; t + 1 < m; t += 2) {
    double pair = rho[t] + rho[t + 1];
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  return std::max(1.0, k * static_cast<double>(m) / tau);
}

}  // namespace detail

/// Split R-hat and bulk ESS per parameter; warns when R-hat > 1.05.
inline Diagnostics diagnostics(const ThetaDraws& draws) {
  if (draws.n_chains < 2) throw TooFewDraws("diagnostics need at least 2 chains");
  if (draws.per_chain < 10) {
    throw TooFewDraws("diagnostics need at least 10 post-thinning draws per chain");
  }
  static const char* names[3] = {"sigma2", "tau2", "phi"};
  Diagnostics d;
  const int half = draws.per_chain / 2;
  for (int p = 0; p < 3; ++p) {
    std::vector<Eigen::VectorXd> seqs;
    for (int c = 0; c < draws.n_chains; ++c) {
      Eigen::VectorXd chain(draws.per_chain);
      int n = 0;
      for (int g = 0; g < draws.G(); ++g) {
        if (draws.chain_ids[g] == c) chain[n++] = draws.draws(g, p);
      }
      seqs.push_back(chain.head(half));
      seqs.push_back(chain.tail(half));
    }
    double w = 0.0, varhat = 0.0;
    d.rhat[p] = detail::split_rhat(seqs, w, varhat);
    d.ess[p] = detail::bulk_ess(seqs, w, varhat);
    if (!(d.rhat[p] <= 1.05)) {
      d.warnings.push_back(std::string(names[p]) + ": R-hat " +
                           std::to_string(d.rhat[p]) + " exceeds 1.05");
    }
  }
  d.computed = true;
  return d;
}

/// Stage 1 of the composition sampler: MCMC over (σ², τ², φ) targeting the
/// selected marginal posterior. Chains are independent streams of the config
/// seed and are merged in chain order, so output is reproducible bit-for-bit.
inline ThetaDraws run_chains(const model::ModelContext& ctx, const McmcConfig& cfg,
                             model::MarginalKind kind) {
  cfg.validate();
  const ThetaTransform tr{ctx.prior.phi.a, ctx.prior.phi.b};
  const auto target = [&](const Eigen::VectorXd& zv) {
    const Eigen::Vector3d z = zv;
    const model::HyperParams t = tr.to_theta(z);
    try {
      const double lp = model::log_marginal(ctx, t, kind);
      return std::isfinite(lp) ? lp + tr.log_jacobian(z) : model::kNegInf;
    } catch (const NumericalError&) {
      return model::kNegInf;  // reject proposals where factorization fails
    }
  };

  ThetaDraws out;
  out.n_chains = cfg.n_chains;
  out.per_chain = cfg.per_chain();
  out.draws.resize(cfg.total_draws(), 3);
  out.log_post.resize(cfg.total_draws());
  out.chain_ids.resize(cfg.total_draws());
  if (cfg.keep_unthinned) out.unthinned.resize(cfg.n_chains * cfg.sampling, 3);

  RwmOptions opt{cfg.warmup, cfg.sampling, cfg.thin, cfg.target_accept, cfg.keep_unthinned};
  for (int c = 0; c < cfg.n_chains; ++c) {
    RngStream rng(cfg.seed, derive_stream("mcmc_chain", static_cast<std::uint64_t>(c)));

    Eigen::Vector3d z0;
    if (cfg.init) {
      z0 = tr.to_z(*cfg.init);
      if (!std::isfinite(target(z0))) {
        throw NonFinite("chain " + std::to_string(c) + ": supplied init has zero posterior density");
      }
    } else {
      bool found = false;
      for (int attempt = 0; attempt < 100 && !found; ++attempt) {
        const model::HyperParams t{
            rng.next_inverse_gamma(ctx.prior.sigma2.shape, ctx.prior.sigma2.scale),
            rng.next_inverse_gamma(ctx.prior.tau2.shape, ctx.prior.tau2.scale),
            ctx.prior.phi.a + (ctx.prior.phi.b - ctx.prior.phi.a) * rng.next_double_pos()};
        if (!model::in_support(ctx.prior, t)) continue;
        z0 = tr.to_z(t);
        found = std::isfinite(target(z0));
      }
      if (!found) {
        throw NonFinite("chain " + std::to_string(c) +
                        ": non-finite posterior at 100 prior-drawn initializations");
      }
    }

    RwmRun run = adaptive_rwm(target, z0, opt, rng);
    if (run.acceptance_rate == 0.0) {
      throw AllRejected(c);
    }
    out.acceptance_rate.push_back(run.acceptance_rate);
    for (int i = 0; i < out.per_chain; ++i) {
      const int g = c * out.per_chain + i;
      const Eigen::Vector3d z = run.thinned.row(i);
      const model::HyperParams t = tr.to_theta(z);
      out.draws(g, 0) = t.sigma2;
      out.draws(g, 1) = t.tau2;
      out.draws(g, 2) = t.phi;
      out.log_post[g] = run.log_target[i] - tr.log_jacobian(z);
      out.chain_ids[g] = c;
    }
    if (cfg.keep_unthinned) {
      for (int i = 0; i < cfg.sampling; ++i) {
        const Eigen::Vector3d z = run.all.row(i);
        const model::HyperParams t = tr.to_theta(z);
        out.unthinned.row(c * cfg.sampling + i) << t.sigma2, t.tau2, t.phi;
      }
    }
  }

  if (cfg.n_chains >= 2 && cfg.per_chain() >= 10) {
    out.diag = diagnostics(out);
  } else {
    out.diag.warnings.push_back("diagnostics skipped: need >= 2 chains and >= 10 draws per chain");
  }
  return out;
}

}  // namespace cosgp::sampler
