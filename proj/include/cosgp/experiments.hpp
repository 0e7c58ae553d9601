#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <exception>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/metrics.hpp"
#include "cosgp/rng.hpp"
#include "cosgp/workflow.hpp"

namespace cosgp::experiments {

/// Pixel roles of the simulation layout. `O`/`K` are the letter-shaped
/// prediction units. `none` marks the filler of coarse cells excluded from
/// the observed support (any cell containing a `none` pixel carries no
/// outcome). `white` is letter-box background inside cells that stay
/// observed; letter and white pixels there simply contribute to their cell's
/// coarse average. The large-area unit of each letter is its full bounding
/// box: the letter plus the surrounding white/excluded background. Everything
/// else is `observed`.
struct OkLayout {
  enum class Role : unsigned char { observed, O, K, white, none };

  int fine_rows = 27;
  int fine_cols = 27;
  int coarse_factor = 3;
  std::vector<Role> roles;  // row-major, fine_rows * fine_cols

  int n_pixels() const { return fine_rows * fine_cols; }
  Role at(int r, int c) const { return roles[static_cast<std::size_t>(r) * fine_cols + c]; }
  Role& at(int r, int c) { return roles[static_cast<std::size_t>(r) * fine_cols + c]; }

  static const char* role_name(Role r) {
    switch (r) {
      case Role::observed: return "observed";
      case Role::O: return "O";
      case Role::K: return "K";
      case Role::white: return "white";
      default: return "none";
    }
  }

  static std::optional<Role> role_from(const std::string& s) {
    for (const Role r : {Role::observed, Role::O, Role::K, Role::white, Role::none}) {
      if (s == role_name(r)) return r;
    }
    return std::nullopt;
  }

  std::vector<int> pixels_with(Role role) const {
    std::vector<int> out;
    for (int i = 0; i < n_pixels(); ++i) {
      if (roles[i] == role) out.push_back(i);
    }
    return out;
  }

  struct Box {
    int r0, r1, c0, c1;  // inclusive
    bool contains(int r, int c) const { return r >= r0 && r <= r1 && c >= c0 && c <= c1; }
  };

  Box bounding_box(Role role) const {
    Box b{fine_rows, -1, fine_cols, -1};
    for (int r = 0; r < fine_rows; ++r) {
      for (int c = 0; c < fine_cols; ++c) {
        if (at(r, c) == role) {
          b.r0 = std::min(b.r0, r);
          b.r1 = std::max(b.r1, r);
          b.c0 = std::min(b.c0, c);
          b.c1 = std::max(b.c1, c);
        }
      }
    }
    if (b.r1 < 0) throw ValidationError(std::string("layout has no '") + role_name(role) + "' pixels");
    return b;
  }

  /// The letter's zone: its bounding box expanded outward to coarse-cell
  /// boundaries. All of the letter's surrounding white (and any excluded
  /// 'none') pixels live inside this box.
  Box zone_box(Role letter) const {
    const int f = coarse_factor;
    Box b = bounding_box(letter);
    b.r0 = (b.r0 / f) * f;
    b.c0 = (b.c0 / f) * f;
    b.r1 = (b.r1 / f) * f + f - 1;
    b.c1 = (b.c1 / f) * f + f - 1;
    return b;
  }

  std::vector<int> unit_pixels(Role letter, bool large) const {
    if (!large) return pixels_with(letter);
    // the large-area unit: the letter plus all of its box background
    const Box b = bounding_box(letter);
    std::vector<int> out;
    for (int r = b.r0; r <= b.r1; ++r) {
      for (int c = b.c0; c <= b.c1; ++c) out.push_back(r * fine_cols + c);
    }
    return out;
  }

  /// Observed coarse cells in row-major coarse order: (coarse row, coarse
  /// col, member fine pixels). A cell carries a coarse outcome unless it
  /// contains an excluded ('none') pixel; letter and white pixels inside an
  /// observed cell simply contribute to that cell's average — that is the
  /// change-of-support situation the model is built for.
  struct ObservedCell {
    int R, C;
    std::vector<int> pixels;
  };

  std::vector<ObservedCell> observed_cells() const {
    const int f = coarse_factor;
    std::vector<ObservedCell> out;
    for (int R = 0; R < fine_rows / f; ++R) {
      for (int C = 0; C < fine_cols / f; ++C) {
        ObservedCell cell{R, C, {}};
        bool excluded = false;
        for (int r = R * f; r < (R + 1) * f; ++r) {
          for (int c = C * f; c < (C + 1) * f; ++c) {
            cell.pixels.push_back(r * fine_cols + c);
            if (at(r, c) == Role::none) excluded = true;
          }
        }
        if (!excluded) out.push_back(std::move(cell));
      }
    }
    return out;
  }

  void validate() const {
    if (fine_rows <= 0 || fine_cols <= 0 || coarse_factor <= 0) {
      throw ValidationError("layout dimensions must be positive");
    }
    if (fine_rows % coarse_factor != 0 || fine_cols % coarse_factor != 0) {
      throw ValidationError("coarse factor must divide the fine grid dimensions");
    }
    if (static_cast<int>(roles.size()) != n_pixels()) {
      throw ValidationError("layout role count != pixel count");
    }
    const auto o = pixels_with(Role::O);
    const auto k = pixels_with(Role::K);
    if (o.size() != 38 || k.size() != 48) {
      throw ValidationError("layout must have exactly 38 'O' and 48 'K' pixels (got " +
                            std::to_string(o.size()) + "/" + std::to_string(k.size()) + ")");
    }
    const Box ob = bounding_box(Role::O);
    const Box kb = bounding_box(Role::K);
    if (!(ob.r1 < kb.r0 || kb.r1 < ob.r0 || ob.c1 < kb.c0 || kb.c1 < ob.c0)) {
      throw ValidationError("letter bounding boxes overlap");
    }
    const Box oz = zone_box(Role::O);
    const Box kz = zone_box(Role::K);
    if (!(oz.r1 < kz.r0 || kz.r1 < oz.r0 || oz.c1 < kz.c0 || kz.c1 < oz.c0)) {
      throw ValidationError("letter zones overlap");
    }
    for (int r = 0; r < fine_rows; ++r) {
      for (int c = 0; c < fine_cols; ++c) {
        const Role role = at(r, c);
        if (role != Role::observed && !oz.contains(r, c) && !kz.contains(r, c)) {
          throw ValidationError("'" + std::string(role_name(role)) +
                                "' pixel outside both letter zones at (" +
                                std::to_string(r) + "," + std::to_string(c) + ")");
        }
      }
    }
    if (observed_cells().empty()) {
      throw ValidationError("layout has no observed coarse cells");
    }
  }

  /// The layout shipped with the harness: a 27×27 grid with 9×9 coarse cells
  /// and two letter-shaped prediction units, each sitting partly inside and
  /// partly outside the observed coarse support. The 38-pixel "O" (9×9 box =
  /// 9 coarse cells) is aligned with the coarse lattice; its left and right
  /// cell columns are excluded from the support while the middle column stays
  /// observed (those coarse outcomes average over letter pixels — the
  /// change-of-support situation the model targets). The 48-pixel "K" (10×8
  /// box cutting through 12 coarse cells) is misaligned; the six cells wholly
  /// inside its box are excluded, leaving the partially overlapped boundary
  /// cells observed. Within excluded cells the non-letter filler is 'none';
  /// inside observed cells the remaining box pixels are 'white' and together
  /// with the letter they form the large-area prediction units.
  static OkLayout builtin() {
    static const char* kO[9] = {".#######.", "##.....##", "##.....##", "##......#",
                                "#.......#", "#......##", "##.....##", "##.....##",
                                ".#######."};
    static const char* kK[10] = {"##....##", "##...###", "##..###.", "##.###..",
                                 "#####...", "#####...", "##.###..", "##..###.",
                                 "##...###", "##....##"};
    OkLayout l;
    l.roles.assign(static_cast<std::size_t>(l.n_pixels()), Role::observed);
    auto place = [&l](const char* const* shape, int n_rows, int n_cols, int r0, int c0,
                      Role letter, const std::set<std::pair<int, int>>& withheld) {
      for (int r = r0; r < r0 + n_rows; ++r) {
        for (int c = c0; c < c0 + n_cols; ++c) {
          l.at(r, c) = shape[r - r0][c - c0] == '#' ? letter : Role::white;
        }
      }
      const int f = l.coarse_factor;
      const Box box{r0, r0 + n_rows - 1, c0, c0 + n_cols - 1};
      for (int R = r0 / f; R <= box.r1 / f; ++R) {
        for (int C = c0 / f; C <= box.c1 / f; ++C) {
          const bool out = withheld.count({R, C}) != 0;
          for (int r = R * f; r < (R + 1) * f; ++r) {
            for (int c = C * f; c < (C + 1) * f; ++c) {
              if (l.at(r, c) == letter) continue;
              if (out) {
                l.at(r, c) = Role::none;  // cell drops out of the support
              } else if (!box.contains(r, c)) {
                l.at(r, c) = Role::observed;  // plain pixel of an observed cell
              }
            }
          }
        }
      }
    };
    place(kO, 9, 9, 6, 3, Role::O,
          {{2, 1}, {2, 3}, {3, 1}, {3, 3}, {4, 1}, {4, 3}});
    place(kK, 10, 8, 12, 15, Role::K,
          {{4, 5}, {4, 6}, {5, 5}, {5, 6}, {6, 5}, {6, 6}});
    l.validate();
    return l;
  }
};

struct SimParams {
  double beta0 = 1.0;
  double beta1 = 5.0;
  double tau2 = 1.0;
  double sigma2 = 2.0;
  double phi = 5.0;
};

struct SimDesign {
  OkLayout layout = OkLayout::builtin();
  SimParams params;
  double gamma = 0.6;  // taper range used by the COS fit (not by generation)
  int replicates = 100;
};

struct SimData {
  supports::FineGrid grid;
  std::vector<supports::SupportRegion> observed;
  Eigen::VectorXd y_B;
  Eigen::VectorXd y_A;      // the generated fine-scale outcomes
  Eigen::VectorXd omega_A;  // the latent GP draw (for generative checks)
  double truth_O = 0.0, truth_K = 0.0;
  double truth_O_large = 0.0, truth_K_large = 0.0;

  workflow::Dataset dataset() const { return {grid, observed, y_B}; }
};

/// Generates replicates of the simulation: predictors i.i.d. standard normal,
/// ω_A from the untapered exponential-correlation GP (dense Cholesky, cached
/// across replicates), white noise on top, then aggregation to the observed
/// cells and the realized unit truths.
class Simulator {
public:
  explicit Simulator(SimDesign design) : design_(std::move(design)) {
    design_.layout.validate();
    const OkLayout& l = design_.layout;
    const int n = l.n_pixels();
    cell_size_ = 1.0 / static_cast<double>(std::max(l.fine_rows, l.fine_cols));

    Eigen::MatrixXd corr(n, n);
    const double h = cell_size_;
    for (int i = 0; i < n; ++i) {
      const int ri = i / l.fine_cols, ci = i % l.fine_cols;
      for (int j = 0; j <= i; ++j) {
        const int dr = ri - j / l.fine_cols, dc = ci - j % l.fine_cols;
        const double d = h * std::sqrt(static_cast<double>(dr) * dr + static_cast<double>(dc) * dc);
        corr(i, j) = corr(j, i) = std::exp(-design_.params.phi * d);
      }
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success) {
      throw NotPSD("exponential correlation over the simulation grid failed to factor");
    }
    corr_chol_ = llt.matrixL();

    for (const auto& cell : l.observed_cells()) {
      region_ids_.push_back("obs_" + std::to_string(cell.R) + "_" + std::to_string(cell.C));
      region_pixels_.push_back(cell.pixels);
    }
  }

  const SimDesign& design() const { return design_; }
  int n_observed() const { return static_cast<int>(region_pixels_.size()); }

  SimData replicate(std::uint64_t master_seed, int rep) const {
    const OkLayout& l = design_.layout;
    const SimParams& p = design_.params;
    const int n = l.n_pixels();
    const auto r64 = static_cast<std::uint64_t>(rep);

    Eigen::VectorXd x(n), z(n), eps(n);
    {
      RngStream rx(master_seed, derive_stream("sim_x", r64));
      RngStream rw(master_seed, derive_stream("sim_omega", r64));
      RngStream re(master_seed, derive_stream("sim_eps", r64));
      for (int i = 0; i < n; ++i) x[i] = rx.next_normal();
      for (int i = 0; i < n; ++i) z[i] = rw.next_normal();
      for (int i = 0; i < n; ++i) eps[i] = std::sqrt(p.tau2) * re.next_normal();
    }

    SimData out;
    const Eigen::VectorXd corr_draw = corr_chol_.triangularView<Eigen::Lower>() * z;
    out.omega_A = std::sqrt(p.sigma2) * corr_draw;
    out.y_A = p.beta0 + (p.beta1 * x.array()) + out.omega_A.array() + eps.array();
    out.grid = supports::make_lattice_grid(l.fine_rows, l.fine_cols, cell_size_,
                                           0.5 * cell_size_, 0.5 * cell_size_, x);

    out.observed.reserve(region_pixels_.size());
    out.y_B.resize(static_cast<Eigen::Index>(region_pixels_.size()));
    for (std::size_t k = 0; k < region_pixels_.size(); ++k) {
      out.observed.push_back(supports::full_pixel_region(region_ids_[k], region_pixels_[k]));
      out.y_B[static_cast<Eigen::Index>(k)] = pixel_mean(out.y_A, region_pixels_[k]);
    }
    out.truth_O = pixel_mean(out.y_A, l.unit_pixels(OkLayout::Role::O, false));
    out.truth_K = pixel_mean(out.y_A, l.unit_pixels(OkLayout::Role::K, false));
    out.truth_O_large = pixel_mean(out.y_A, l.unit_pixels(OkLayout::Role::O, true));
    out.truth_K_large = pixel_mean(out.y_A, l.unit_pixels(OkLayout::Role::K, true));
    return out;
  }

  /// The four prediction units as fine-grid regions: O, K, O_large, K_large.
  std::vector<supports::SupportRegion> prediction_units() const {
    using Role = OkLayout::Role;
    const OkLayout& l = design_.layout;
    std::vector<supports::SupportRegion> out;
    out.push_back(supports::full_pixel_region("O", l.unit_pixels(Role::O, false),
                                              supports::SupportRegion::Role::prediction));
    out.push_back(supports::full_pixel_region("K", l.unit_pixels(Role::K, false),
                                              supports::SupportRegion::Role::prediction));
    out.push_back(supports::full_pixel_region("O_large", l.unit_pixels(Role::O, true),
                                              supports::SupportRegion::Role::prediction));
    out.push_back(supports::full_pixel_region("K_large", l.unit_pixels(Role::K, true),
                                              supports::SupportRegion::Role::prediction));
    return out;
  }

private:
  static double pixel_mean(const Eigen::VectorXd& field, const std::vector<int>& pixels) {
    double s = 0.0;
    for (const int px : pixels) s += field[px];
    return s / static_cast<double>(pixels.size());
  }

  SimDesign design_;
  double cell_size_ = 0.0;
  Eigen::MatrixXd corr_chol_;
  std::vector<std::string> region_ids_;
  std::vector<std::vector<int>> region_pixels_;
};

/// Per-replicate scores for one prediction unit.
struct UnitReplicate {
  double error = 0.0;
  bool covered = false;
  double width = 0.0;
  double crps = 0.0;
};

struct StudyResult {
  metrics::ScoreReport small;  // units O, K
  metrics::ScoreReport large;  // units O_large, K_large
  std::array<int, 3> theta_covered{};  // replicates whose 95% CI covers σ², τ², φ
  int replicates = 0;
  double mean_fit_seconds = 0.0;
  // unit index: 0=O, 1=K, 2=O_large, 3=K_large
  std::vector<std::array<UnitReplicate, 4>> per_replicate;
};

namespace detail {

inline std::vector<double> column(const Eigen::MatrixXd& m, int j) {
  return {m.col(j).data(), m.col(j).data() + m.rows()};
}

inline bool interval_covers(std::vector<double> samples, double value) {
  std::sort(samples.begin(), samples.end());
  return value >= quantile_sorted(samples, 0.025) && value <= quantile_sorted(samples, 0.975);
}

}  // namespace detail

/// Run the full replicated study for one method: simulate → fit → predict the
/// four units → score. Replicates use disjoint seed streams derived from
/// cfg.seed and can run on several threads; results are keyed by replicate
/// index, so the report is identical for any thread count.
inline StudyResult run_ok_study(const SimDesign& design, workflow::Method method,
                                const sampler::McmcConfig& cfg, int threads = 1) {
  const Simulator sim(design);
  const int R = design.replicates;
  StudyResult result;
  result.replicates = R;
  result.per_replicate.resize(R);
  std::vector<std::array<bool, 3>> theta_cov(R);
  std::vector<double> fit_seconds(R, 0.0);

  workflow::MethodConfig mcfg;
  mcfg.method = method;
  mcfg.gamma = design.gamma;
  mcfg.block_factor = design.layout.coarse_factor;

  auto run_one = [&](int rep) {
    const SimData data = sim.replicate(cfg.seed, rep);
    sampler::McmcConfig rep_cfg = cfg;
    rep_cfg.seed = derive_seed(cfg.seed, "replicate", static_cast<std::uint64_t>(rep));

    const auto t0 = std::chrono::steady_clock::now();
    const workflow::FitResult fit = fit_model(data.dataset(), mcfg, rep_cfg);
    fit_seconds[rep] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const posterior::PredictiveDraws pred =
        predict_model(fit, sim.prediction_units(), rep_cfg.seed);
    const double truths[4] = {data.truth_O, data.truth_K, data.truth_O_large,
                              data.truth_K_large};
    for (int u = 0; u < 4; ++u) {
      const std::vector<double> samples = detail::column(pred.y_u, u);
      double mean = 0.0;
      for (const double s : samples) mean += s;
      mean /= static_cast<double>(samples.size());
      const metrics::Interval ci = metrics::ci_cover_width(samples, truths[u]);
      result.per_replicate[rep][u] =
          UnitReplicate{mean - truths[u], ci.covered, ci.width(),
                        metrics::crps_empirical(samples, truths[u])};
    }
    const double gen[3] = {design.params.sigma2, design.params.tau2, design.params.phi};
    for (int p = 0; p < 3; ++p) {
      theta_cov[rep][p] = detail::interval_covers(detail::column(fit.draws.theta.draws, p), gen[p]);
    }
  };

  if (threads <= 1) {
    for (int rep = 0; rep < R; ++rep) {
      try {
        run_one(rep);
      } catch (const Error& e) {
        throw Error("replicate " + std::to_string(rep) + " (seed " +
                    std::to_string(derive_seed(cfg.seed, "replicate", rep)) +
                    ") failed: " + e.what());
      }
    }
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        try {
          for (int rep = t; rep < R; rep += threads) run_one(rep);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  static const char* unit_names[4] = {"O", "K", "O_large", "K_large"};
  auto report_for = [&](int u0, int u1) {
    metrics::ScoreReport rep;
    rep.n_replicates = R;
    for (int u = u0; u <= u1; ++u) {
      std::vector<double> errors(R);
      double cover = 0.0, width = 0.0, crps = 0.0;
      for (int r = 0; r < R; ++r) {
        const UnitReplicate& ur = result.per_replicate[r][u];
        errors[r] = ur.error;
        cover += ur.covered ? 1.0 : 0.0;
        width += ur.width;
        crps += ur.crps;
      }
      rep.targets.push_back(metrics::TargetScore{
          unit_names[u], metrics::rmspe(errors), metrics::mpe(errors),
          crps / R, cover / R, width / R});
    }
    rep.finalize();
    return rep;
  };
  result.small = report_for(0, 1);
  result.large = report_for(2, 3);
  for (int p = 0; p < 3; ++p) {
    for (int r = 0; r < R; ++r) result.theta_covered[p] += theta_cov[r][p] ? 1 : 0;
  }
  for (const double s : fit_seconds) result.mean_fit_seconds += s / R;
  return result;
}

struct CvRegionScore {
  std::string region_id;
  int fold = 0;
  double error = 0.0;
  bool covered = false;
  double width = 0.0;
  double crps = 0.0;
};

struct CvResult {
  metrics::ScoreReport pooled;  // single target "pooled"
  std::vector<CvRegionScore> regions;
  std::vector<int> fold_of;  // per observed-region index
};

/// K-fold cross-validation: a seeded random equal-as-possible partition;
/// each fold refits on the training regions and predicts the held-out
/// regions as prediction supports.
inline CvResult run_cross_validation(const workflow::Dataset& data, int k,
                                     const workflow::MethodConfig& mcfg,
                                     const sampler::McmcConfig& cfg) {
  const int n = static_cast<int>(data.observed.size());
  if (k < 2) throw ValidationError("cross-validation needs k >= 2");
  if (n < k) {
    throw TooFewRegions("cannot make " + std::to_string(k) + " folds from " +
                        std::to_string(n) + " regions");
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  RngStream rng(cfg.seed, derive_stream("cv_folds"));
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  CvResult result;
  result.fold_of.assign(n, 0);
  for (int i = 0; i < n; ++i) result.fold_of[order[i]] = i % k;

  result.regions.resize(n);
  for (int fold = 0; fold < k; ++fold) {
    workflow::Dataset train{data.grid, {}, {}};
    std::vector<supports::SupportRegion> test;
    std::vector<int> test_idx;
    std::vector<double> y_train;
    for (int i = 0; i < n; ++i) {
      if (result.fold_of[i] == fold) {
        supports::SupportRegion r = data.observed[i];
        r.role = supports::SupportRegion::Role::prediction;
        test.push_back(std::move(r));
        test_idx.push_back(i);
      } else {
        train.observed.push_back(data.observed[i]);
        y_train.push_back(data.y_B[i]);
      }
    }
    train.y_B = Eigen::Map<Eigen::VectorXd>(y_train.data(), static_cast<Eigen::Index>(y_train.size()));

    sampler::McmcConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, "cv_fold", static_cast<std::uint64_t>(fold));
    const workflow::FitResult fit = fit_model(train, mcfg, fold_cfg);
    const posterior::PredictiveDraws pred = predict_model(fit, test, fold_cfg.seed);

    for (std::size_t t = 0; t < test_idx.size(); ++t) {
      const int i = test_idx[t];
      const std::vector<double> samples = detail::column(pred.y_u, static_cast<int>(t));
      double mean = 0.0;
      for (const double s : samples) mean += s;
      mean /= static_cast<double>(samples.size());
      const metrics::Interval ci = metrics::ci_cover_width(samples, data.y_B[i]);
      result.regions[i] = CvRegionScore{data.observed[i].id,     fold,
                                        mean - data.y_B[i],      ci.covered,
                                        ci.width(),              metrics::crps_empirical(samples, data.y_B[i])};
    }
  }

  std::vector<double> errors(n);
  double cover = 0.0, width = 0.0, crps = 0.0;
  for (int i = 0; i < n; ++i) {
    errors[i] = result.regions[i].error;
    cover += result.regions[i].covered ? 1.0 : 0.0;
    width += result.regions[i].width;
    crps += result.regions[i].crps;
  }
  result.pooled.n_replicates = n;
  result.pooled.targets.push_back(metrics::TargetScore{
      "pooled", metrics::rmspe(errors), metrics::mpe(errors), crps / n, cover / n,
      width / n});
  result.pooled.finalize();
  return result;
}

}  // namespace cosgp::experiments
