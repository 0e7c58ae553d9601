#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <tuple>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cosgp/errors.hpp"
#include "cosgp/experiments.hpp"
#include "cosgp/metrics.hpp"
#include "cosgp/posterior.hpp"
#include "cosgp/rng.hpp"
#include "cosgp/sampler.hpp"
#include "cosgp/supports.hpp"

namespace cosgp::io {

// ---------------------------------------------------------------------------
// Low-level text helpers
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

inline double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw ValidationError(where + ": cannot parse number '" + tok + "'");
  }
  return v;
}

inline long long parse_int(const std::string& tok, const std::string& where) {
  long long v = 0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw ValidationError(where + ": cannot parse integer '" + tok + "'");
  }
  return v;
}

/// Shortest round-trippable decimal representation of a double. All %g
/// precisions are probed and the shortest candidate that parses back bitwise
/// equal wins, so e.g. 10.0 prints as "10" rather than "1e+01".
inline std::string format_double(double v) {
  char best[40];
  std::snprintf(best, sizeof(best), "%.17g", v);
  std::size_t best_len = std::char_traits<char>::length(best);
  for (int prec = 1; prec <= 16; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    const std::size_t len = std::char_traits<char>::length(probe);
    double back = 0.0;
    std::from_chars(probe, probe + len, back);
    if (back == v && len < best_len) {
      std::memcpy(best, probe, len + 1);
      best_len = len;
    }
  }
  return best;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << content;
  if (!out) throw ValidationError("write failed: " + path);
}

/// Non-empty, non-comment CSV lines with 1-based line numbers.
inline std::vector<std::pair<int, std::string>> csv_lines(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::pair<int, std::string>> out;
  int lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++lineno;
    std::string line = trim(std::string_view(text).substr(start, end - start));
    if (!line.empty() && line[0] != '#') out.emplace_back(lineno, std::move(line));
    start = end + 1;
  }
  return out;
}

inline void expect_header(const std::vector<std::string>& got,
                          const std::vector<std::string>& want, const std::string& path) {
  const bool prefix_ok = got.size() >= want.size() &&
                         std::equal(want.begin(), want.end(), got.begin());
  if (!prefix_ok || (got.size() != want.size() && want.back() != got[want.size() - 1])) {
    std::string w;
    for (const auto& c : want) w += (w.empty() ? "" : ",") + c;
    throw ValidationError(path + ": expected header starting '" + w + "'");
  }
}

inline std::uint64_t content_hash(const std::string& bytes) {
  return rng_detail::fnv1a64(bytes);
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

struct GridFile {
  supports::FineGrid grid;
  std::vector<std::string> predictor_names;
};

/// CSV `pixel_id,x,y,<predictor columns...>` with dense pixel ids 0..n_a-1.
inline GridFile load_grid_csv(const std::string& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("grid file is empty: " + path);
  const auto header = split_csv_line(lines.front().second);
  expect_header(header, {"pixel_id", "x", "y"}, path);
  const int p = static_cast<int>(header.size()) - 3;

  const int n = static_cast<int>(lines.size()) - 1;
  if (n <= 0) throw EmptyInput("grid file has no pixel rows: " + path);
  Eigen::MatrixXd centroids(n, 2);
  Eigen::MatrixXd predictors(n, p);
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int row = 0; row < n; ++row) {
    const auto& [lineno, line] = lines[static_cast<std::size_t>(row) + 1];
    const std::string where = path + ":" + std::to_string(lineno);
    const auto tok = split_csv_line(line);
    if (static_cast<int>(tok.size()) != 3 + p) {
      throw ValidationError(where + ": expected " + std::to_string(3 + p) + " columns, got " +
                            std::to_string(tok.size()));
    }
    const long long id = parse_int(tok[0], where);
    if (id < 0 || id >= n) {
      throw ValidationError(where + ": pixel_id " + tok[0] + " out of range 0.." +
                            std::to_string(n - 1) + " (ids must be dense)");
    }
    if (seen[static_cast<std::size_t>(id)]) {
      throw ValidationError(where + ": duplicate pixel_id " + tok[0]);
    }
    seen[static_cast<std::size_t>(id)] = true;
    centroids(id, 0) = parse_double(tok[1], where);
    centroids(id, 1) = parse_double(tok[2], where);
    for (int j = 0; j < p; ++j) predictors(id, j) = parse_double(tok[3 + j], where);
  }
  GridFile out{supports::make_grid(centroids, predictors), {}};
  out.predictor_names.assign(header.begin() + 3, header.end());
  return out;
}

/// CSV membership format `region_id,pixel_id,fraction`; regions keep
/// first-appearance order.
inline std::vector<supports::SupportRegion> load_regions_csv(
    const std::string& path,
    supports::SupportRegion::Role role = supports::SupportRegion::Role::observed) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("region file is empty: " + path);
  expect_header(split_csv_line(lines.front().second), {"region_id", "pixel_id", "fraction"},
                path);
  std::vector<supports::SupportRegion> out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const std::string where = path + ":" + std::to_string(lineno);
    const auto tok = split_csv_line(line);
    if (tok.size() != 3) throw ValidationError(where + ": expected 3 columns");
    const auto [it, fresh] = index.try_emplace(tok[0], out.size());
    if (fresh) {
      out.push_back(supports::SupportRegion{tok[0], role, supports::SupportRegion::Membership{}});
    }
    auto& m = std::get<supports::SupportRegion::Membership>(out[it->second].geometry);
    m.pixels.push_back(static_cast<int>(parse_int(tok[1], where)));
    m.fractions.push_back(parse_double(tok[2], where));
  }
  if (out.empty()) throw EmptyInput("region file has no rows: " + path);
  return out;
}

/// GeoJSON FeatureCollection of Polygon features carrying an `id` property.
inline std::vector<supports::SupportRegion> load_regions_geojson(
    const std::string& path,
    supports::SupportRegion::Role role = supports::SupportRegion::Role::observed) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw ValidationError(path + ": expected a GeoJSON FeatureCollection");
  }
  std::vector<supports::SupportRegion> out;
  for (const auto& feature : doc["features"]) {
    std::string id;
    if (feature.contains("properties") && feature["properties"].contains("id")) {
      const auto& v = feature["properties"]["id"];
      id = v.is_string() ? v.get<std::string>() : v.dump();
    } else if (feature.contains("id")) {
      const auto& v = feature["id"];
      id = v.is_string() ? v.get<std::string>() : v.dump();
    } else {
      throw ValidationError(path + ": feature without an 'id' property");
    }
    const auto& geom = feature["geometry"];
    if (geom.value("type", "") != "Polygon") {
      throw ValidationError(path + ": feature '" + id + "' is not a Polygon");
    }
    const auto& rings = geom["coordinates"];
    if (!rings.is_array() || rings.empty()) {
      throw DegenerateGeometry(path + ": feature '" + id + "' has no rings");
    }
    if (rings.size() > 1) {
      throw ValidationError(path + ": feature '" + id + "' has holes (unsupported)");
    }
    Polygon poly;
    for (const auto& pt : rings[0]) {
      poly.push_back(Point{pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    if (poly.size() >= 2 && poly.front().x == poly.back().x &&
        poly.front().y == poly.back().y) {
      poly.pop_back();  // GeoJSON rings repeat the first vertex
    }
    out.push_back(supports::polygon_region(id, std::move(poly), role));
  }
  if (out.empty()) throw EmptyInput(path + ": FeatureCollection has no features");
  return out;
}

inline std::vector<supports::SupportRegion> load_regions_any(
    const std::string& path,
    supports::SupportRegion::Role role = supports::SupportRegion::Role::observed) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".json" || ext == ".geojson") return load_regions_geojson(path, role);
  return load_regions_csv(path, role);
}

/// CSV `region_id,value`.
inline std::unordered_map<std::string, double> load_outcomes_csv(const std::string& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("outcome file is empty: " + path);
  expect_header(split_csv_line(lines.front().second), {"region_id", "value"}, path);
  std::unordered_map<std::string, double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const std::string where = path + ":" + std::to_string(lineno);
    const auto tok = split_csv_line(line);
    if (tok.size() != 2) throw ValidationError(where + ": expected 2 columns");
    if (!out.emplace(tok[0], parse_double(tok[1], where)).second) {
      throw ValidationError(where + ": duplicate outcome for region '" + tok[0] + "'");
    }
  }
  if (out.empty()) throw EmptyInput("outcome file has no rows: " + path);
  return out;
}

/// CSV `region_id,group`.
inline std::map<std::string, std::string> load_grouping_csv(const std::string& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("grouping file is empty: " + path);
  expect_header(split_csv_line(lines.front().second), {"region_id", "group"}, path);
  std::map<std::string, std::string> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const auto tok = split_csv_line(line);
    if (tok.size() != 2) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected 2 columns");
    }
    out[tok[0]] = tok[1];
  }
  return out;
}

/// CSV `pixel_row,pixel_col,role`; every pixel of the bounding rectangle must
/// appear exactly once.
inline experiments::OkLayout load_layout_csv(const std::string& path, int coarse_factor = 3) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("layout file is empty: " + path);
  expect_header(split_csv_line(lines.front().second), {"pixel_row", "pixel_col", "role"}, path);
  struct Entry {
    int r, c;
    experiments::OkLayout::Role role;
  };
  std::vector<Entry> entries;
  int max_r = -1, max_c = -1;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const std::string where = path + ":" + std::to_string(lineno);
    const auto tok = split_csv_line(line);
    if (tok.size() != 3) throw ValidationError(where + ": expected 3 columns");
    const int r = static_cast<int>(parse_int(tok[0], where));
    const int c = static_cast<int>(parse_int(tok[1], where));
    if (r < 0 || c < 0) throw ValidationError(where + ": negative pixel index");
    const auto role = experiments::OkLayout::role_from(tok[2]);
    if (!role) throw ValidationError(where + ": unknown role '" + tok[2] + "'");
    entries.push_back(Entry{r, c, *role});
    max_r = std::max(max_r, r);
    max_c = std::max(max_c, c);
  }
  experiments::OkLayout layout;
  layout.fine_rows = max_r + 1;
  layout.fine_cols = max_c + 1;
  layout.coarse_factor = coarse_factor;
  if (static_cast<int>(entries.size()) != layout.n_pixels()) {
    throw ValidationError(path + ": expected " + std::to_string(layout.n_pixels()) +
                          " rows covering the full grid, got " +
                          std::to_string(entries.size()));
  }
  layout.roles.assign(static_cast<std::size_t>(layout.n_pixels()),
                      experiments::OkLayout::Role::none);
  std::vector<bool> seen(static_cast<std::size_t>(layout.n_pixels()), false);
  for (const auto& e : entries) {
    const auto idx = static_cast<std::size_t>(e.r) * layout.fine_cols + e.c;
    if (seen[idx]) {
      throw ValidationError(path + ": duplicate pixel (" + std::to_string(e.r) + "," +
                            std::to_string(e.c) + ")");
    }
    seen[idx] = true;
    layout.roles[idx] = e.role;
  }
  layout.validate();
  return layout;
}

inline void save_layout_csv(const experiments::OkLayout& layout, const std::string& path) {
  std::ostringstream out;
  out << "pixel_row,pixel_col,role\n";
  for (int r = 0; r < layout.fine_rows; ++r) {
    for (int c = 0; c < layout.fine_cols; ++c) {
      out << r << ',' << c << ',' << experiments::OkLayout::role_name(layout.at(r, c)) << '\n';
    }
  }
  write_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string theta_csv_text(const sampler::ThetaDraws& draws) {
  std::ostringstream out;
  out << "chain,iter,sigma2,tau2,phi,log_post\n";
  for (int g = 0; g < draws.G(); ++g) {
    out << draws.chain_ids[g] << ',' << g % draws.per_chain << ','
        << format_double(draws.draws(g, 0)) << ',' << format_double(draws.draws(g, 1)) << ','
        << format_double(draws.draws(g, 2)) << ',' << format_double(draws.log_post[g]) << '\n';
  }
  return out.str();
}

inline std::string beta_omega_csv_text(const posterior::PosteriorDraws& post,
                                       const std::vector<std::string>& region_ids) {
  std::ostringstream out;
  out << "g,name,value\n";
  for (int g = 0; g < post.G(); ++g) {
    for (int j = 0; j < post.beta.cols(); ++j) {
      out << g << ",beta_" << j << ',' << format_double(post.beta(g, j)) << '\n';
    }
    for (int j = 0; j < post.omega_B.cols(); ++j) {
      out << g << ",omega_" << region_ids[static_cast<std::size_t>(j)] << ','
          << format_double(post.omega_B(g, j)) << '\n';
    }
  }
  return out.str();
}

inline std::string pred_draws_csv_text(const posterior::PredictiveDraws& pred) {
  std::ostringstream out;
  out << "g,region_id,value\n";
  for (int g = 0; g < pred.G(); ++g) {
    for (int j = 0; j < pred.n_regions(); ++j) {
      out << g << ',' << pred.region_ids[static_cast<std::size_t>(j)] << ','
          << format_double(pred.y_u(g, j)) << '\n';
    }
  }
  return out.str();
}

inline std::string pred_summary_csv_text(const posterior::PredictiveDraws& pred) {
  std::ostringstream out;
  out << "region_id,median,lo,hi\n";
  for (int j = 0; j < pred.n_regions(); ++j) {
    std::vector<double> s(pred.y_u.col(j).data(), pred.y_u.col(j).data() + pred.G());
    std::sort(s.begin(), s.end());
    out << pred.region_ids[static_cast<std::size_t>(j)] << ','
        << format_double(quantile_sorted(s, 0.5)) << ','
        << format_double(quantile_sorted(s, 0.025)) << ','
        << format_double(quantile_sorted(s, 0.975)) << '\n';
  }
  return out.str();
}

inline std::string totals_csv_text(const std::map<std::string, Eigen::VectorXd>& totals) {
  std::ostringstream out;
  out << "group,median,lo,hi\n";
  for (const auto& [group, draws] : totals) {
    std::vector<double> s(draws.data(), draws.data() + draws.size());
    std::sort(s.begin(), s.end());
    out << group << ',' << format_double(quantile_sorted(s, 0.5)) << ','
        << format_double(quantile_sorted(s, 0.025)) << ','
        << format_double(quantile_sorted(s, 0.975)) << '\n';
  }
  return out.str();
}

inline nlohmann::json diagnostics_json(const sampler::ThetaDraws& draws) {
  nlohmann::json j;
  j["n_chains"] = draws.n_chains;
  j["draws_per_chain"] = draws.per_chain;
  j["acceptance_rate"] = draws.acceptance_rate;
  j["computed"] = draws.diag.computed;
  if (draws.diag.computed) {
    j["rhat"] = {{"sigma2", draws.diag.rhat[0]},
                 {"tau2", draws.diag.rhat[1]},
                 {"phi", draws.diag.rhat[2]}};
    j["ess"] = {{"sigma2", draws.diag.ess[0]},
                {"tau2", draws.diag.ess[1]},
                {"phi", draws.diag.ess[2]}};
  }
  j["warnings"] = draws.diag.warnings;
  return j;
}

inline std::string score_csv_text(const metrics::ScoreReport& report) {
  std::ostringstream out;
  out << "target,rmspe,mpe,crps,ci_cover,ci_width\n";
  auto row = [&out](const metrics::TargetScore& t) {
    out << t.target << ',' << format_double(t.rmspe) << ',' << format_double(t.mpe) << ','
        << format_double(t.crps) << ',' << format_double(t.ci_cover) << ','
        << format_double(t.ci_width) << '\n';
  };
  for (const auto& t : report.targets) row(t);
  if (report.targets.size() > 1) row(report.average);
  return out.str();
}

inline nlohmann::json score_json(const metrics::ScoreReport& report) {
  nlohmann::json j;
  j["n_replicates"] = report.n_replicates;
  auto entry = [](const metrics::TargetScore& t) {
    return nlohmann::json{{"target", t.target},   {"rmspe", t.rmspe}, {"mpe", t.mpe},
                          {"crps", t.crps},       {"ci_cover", t.ci_cover},
                          {"ci_width", t.ci_width}};
  };
  j["targets"] = nlohmann::json::array();
  for (const auto& t : report.targets) j["targets"].push_back(entry(t));
  if (report.targets.size() > 1) j["average"] = entry(report.average);
  return j;
}

/// Every artifact directory gets a manifest: the canonical config snapshot,
/// its hash, the master seed, and a content hash per written file.
class ArtifactWriter {
public:
  ArtifactWriter(std::string dir, std::string canonical_config, std::uint64_t fit_hash,
                 std::uint64_t seed)
      : dir_(std::move(dir)) {
    ensure_dir(dir_);
    manifest_["format"] = "cosgp-manifest-v1";
    manifest_["config"] = std::move(canonical_config);
    manifest_["config_hash"] = hash_hex(fit_hash);
    manifest_["seed"] = seed;
    manifest_["files"] = nlohmann::json::object();
  }

  std::string path(const std::string& name) const {
    return (std::filesystem::path(dir_) / name).string();
  }

  void write(const std::string& name, const std::string& content) {
    write_file(path(name), content);
    manifest_["files"][name] = hash_hex(content_hash(content));
  }

  void write_json(const std::string& name, const nlohmann::json& j) {
    write(name, j.dump(2) + "\n");
  }

  void finish() { write_file(path("manifest.json"), manifest_.dump(2) + "\n"); }

  const std::string& dir() const { return dir_; }

private:
  std::string dir_;
  nlohmann::json manifest_;
};

inline nlohmann::json load_manifest(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "manifest.json").string();
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": invalid manifest: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Draw-file readers (used by `predict` to resume from a fit directory)
// ---------------------------------------------------------------------------

inline sampler::ThetaDraws load_theta_csv(const std::string& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("theta file is empty: " + path);
  expect_header(split_csv_line(lines.front().second),
                {"chain", "iter", "sigma2", "tau2", "phi", "log_post"}, path);
  const int G = static_cast<int>(lines.size()) - 1;
  if (G <= 0) throw EmptyInput("theta file has no draws: " + path);
  sampler::ThetaDraws out;
  out.draws.resize(G, 3);
  out.log_post.resize(G);
  out.chain_ids.resize(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const auto& [lineno, line] = lines[static_cast<std::size_t>(g) + 1];
    const std::string where = path + ":" + std::to_string(lineno);
    const auto tok = split_csv_line(line);
    if (tok.size() != 6) throw ValidationError(where + ": expected 6 columns");
    out.chain_ids[static_cast<std::size_t>(g)] = static_cast<int>(parse_int(tok[0], where));
    out.draws(g, 0) = parse_double(tok[2], where);
    out.draws(g, 1) = parse_double(tok[3], where);
    out.draws(g, 2) = parse_double(tok[4], where);
    out.log_post[g] = parse_double(tok[5], where);
  }
  out.n_chains = 1 + *std::max_element(out.chain_ids.begin(), out.chain_ids.end());
  out.per_chain = G / std::max(1, out.n_chains);
  out.acceptance_rate.assign(static_cast<std::size_t>(out.n_chains), 0.0);
  return out;
}

/// CSV `g,region_id,value` (as written by `pred_draws_csv_text`); returns
/// draws with columns in first-appearance region order.
inline posterior::PredictiveDraws load_pred_draws_csv(const std::string& path) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("prediction draw file is empty: " + path);
  expect_header(split_csv_line(lines.front().second), {"g", "region_id", "value"}, path);
  std::vector<std::string> ids;
  std::unordered_map<std::string, int> col_of;
  std::vector<std::tuple<int, int, double>> cells;
  int max_g = -1;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const std::string where = path + ":" + std::to_string(lineno);
    const auto tok = split_csv_line(line);
    if (tok.size() != 3) throw ValidationError(where + ": expected 3 columns");
    const auto g = static_cast<int>(parse_int(tok[0], where));
    if (g < 0) throw ValidationError(where + ": negative draw index");
    const auto [it, fresh] = col_of.try_emplace(tok[1], static_cast<int>(ids.size()));
    if (fresh) ids.push_back(tok[1]);
    cells.emplace_back(g, it->second, parse_double(tok[2], where));
    max_g = std::max(max_g, g);
  }
  if (max_g < 0) throw EmptyInput("prediction draw file has no rows: " + path);
  posterior::PredictiveDraws out;
  out.region_ids = ids;
  out.y_u = Eigen::MatrixXd::Constant(max_g + 1, static_cast<Eigen::Index>(ids.size()),
                                      std::numeric_limits<double>::quiet_NaN());
  for (const auto& [g, j, v] : cells) out.y_u(g, j) = v;
  if (!out.y_u.allFinite()) {
    throw ValidationError(path + ": incomplete draw file (missing draw/region entries)");
  }
  return out;
}

inline posterior::PosteriorDraws load_beta_omega_csv(const std::string& path,
                                                     const sampler::ThetaDraws& theta,
                                                     const std::vector<std::string>& region_ids,
                                                     int n_coef) {
  const auto lines = csv_lines(path);
  if (lines.empty()) throw EmptyInput("draw file is empty: " + path);
  expect_header(split_csv_line(lines.front().second), {"g", "name", "value"}, path);
  const int G = theta.G();
  const int n_b = static_cast<int>(region_ids.size());
  std::unordered_map<std::string, int> omega_col;
  for (int j = 0; j < n_b; ++j) omega_col["omega_" + region_ids[static_cast<std::size_t>(j)]] = j;

  posterior::PosteriorDraws out;
  out.theta = theta;
  out.beta = Eigen::MatrixXd::Constant(G, n_coef, std::numeric_limits<double>::quiet_NaN());
  out.omega_B = Eigen::MatrixXd::Constant(G, n_b, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    const std::string where = path + ":" + std::to_string(lineno);
    const auto tok = split_csv_line(line);
    if (tok.size() != 3) throw ValidationError(where + ": expected 3 columns");
    const auto g = static_cast<int>(parse_int(tok[0], where));
    if (g < 0 || g >= G) throw ValidationError(where + ": draw index out of range");
    const double value = parse_double(tok[2], where);
    if (tok[1].rfind("beta_", 0) == 0) {
      const auto j = static_cast<int>(parse_int(tok[1].substr(5), where));
      if (j < 0 || j >= n_coef) throw ValidationError(where + ": unknown coefficient " + tok[1]);
      out.beta(g, j) = value;
    } else {
      const auto it = omega_col.find(tok[1]);
      if (it == omega_col.end())
        throw ValidationError(where + ": unknown draw name '" + tok[1] + "'");
      out.omega_B(g, it->second) = value;
    }
  }
  if (!out.beta.allFinite() || !out.omega_B.allFinite()) {
    throw ValidationError(path + ": incomplete draw file (missing entries)");
  }
  return out;
}

}  // namespace cosgp::io
