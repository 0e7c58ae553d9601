#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cosgp/errors.hpp"
#include "cosgp/io.hpp"
#include "cosgp/model.hpp"
#include "cosgp/sampler.hpp"
#include "cosgp/workflow.hpp"

namespace cosgp::io {

/// Complete run configuration. Grammar: `[section]` headers, `key = value`
/// lines, `#` comments. Unknown sections or keys are errors; CLI flags
/// override file values. `canonical()` serializes every key (defaults
/// materialized) so equal configs hash equally.
struct RunConfig {
  // [run]
  std::string method = "cos";  // cos | block
  std::string output;
  int threads = 0;  // 0 = all hardware threads

  // [data]
  std::string grid, regions, outcomes, predict, grouping, layout;

  // [kernel]
  double gamma = 0.6;
  int block_factor = 3;

  // [prior]
  std::string beta_prior = "gaussian";  // gaussian | flat
  double beta_mean = 0.0;
  double beta_var = 1000.0;
  double sigma2_shape = 2.0, sigma2_scale = 2.0;
  double tau2_shape = 2.0, tau2_scale = 2.0;
  double phi_min = 0.006, phi_max = 30.0;

  // [mcmc]
  int chains = 4, warmup = 500, sampling = 500, thin = 10;
  std::uint64_t seed = 0;
  double target_accept = 0.30;

  // [simulate]
  std::string design = "small";  // small | large | both
  int replicates = 100;

  // [cv]
  int k = 10;

  void set(const std::string& section, const std::string& key, const std::string& value,
           const std::string& where) {
    auto as_double = [&] { return parse_double(value, where); };
    auto as_int = [&] { return static_cast<int>(parse_int(value, where)); };
    auto bad_key = [&]() -> void {
      throw ValidationError(where + ": unknown key '" + section + "." + key + "'");
    };
    if (section == "run") {
      if (key == "method") method = value;
      else if (key == "output") output = value;
      else if (key == "threads") threads = as_int();
      else bad_key();
    } else if (section == "data") {
      if (key == "grid") grid = value;
      else if (key == "regions") regions = value;
      else if (key == "outcomes") outcomes = value;
      else if (key == "predict") predict = value;
      else if (key == "grouping") grouping = value;
      else if (key == "layout") layout = value;
      else bad_key();
    } else if (section == "kernel") {
      if (key == "gamma") gamma = value == "inf" ? std::numeric_limits<double>::infinity() : as_double();
      else if (key == "block_factor") block_factor = as_int();
      else bad_key();
    } else if (section == "prior") {
      if (key == "beta") beta_prior = value;
      else if (key == "beta_mean") beta_mean = as_double();
      else if (key == "beta_var") beta_var = as_double();
      else if (key == "sigma2_shape") sigma2_shape = as_double();
      else if (key == "sigma2_scale") sigma2_scale = as_double();
      else if (key == "tau2_shape") tau2_shape = as_double();
      else if (key == "tau2_scale") tau2_scale = as_double();
      else if (key == "phi_min") phi_min = as_double();
      else if (key == "phi_max") phi_max = as_double();
      else bad_key();
    } else if (section == "mcmc") {
      if (key == "chains") chains = as_int();
      else if (key == "warmup") warmup = as_int();
      else if (key == "sampling") sampling = as_int();
      else if (key == "thin") thin = as_int();
      else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(value, where));
      else if (key == "target_accept") target_accept = as_double();
      else bad_key();
    } else if (section == "simulate") {
      if (key == "design") design = value;
      else if (key == "replicates") replicates = as_int();
      else bad_key();
    } else if (section == "cv") {
      if (key == "k") k = as_int();
      else bad_key();
    } else {
      throw ValidationError(where + ": unknown section '" + section + "'");
    }
  }

  void validate_common(bool allow_both_method = false) const {
    const bool method_ok =
        method == "cos" || method == "block" || (allow_both_method && method == "both");
    if (!method_ok) {
      throw ValidationError(std::string("run.method must be 'cos' or 'block'") +
                            (allow_both_method ? " (or 'both')" : "") + ", got '" + method +
                            "'");
    }
    if (method != "block" && !(gamma > 0.0)) {
      throw ValidationError("kernel.gamma must be > 0 for the cos method");
    }
    if (block_factor < 1) throw ValidationError("kernel.block_factor must be >= 1");
    if (beta_prior != "gaussian" && beta_prior != "flat") {
      throw ValidationError("prior.beta must be 'gaussian' or 'flat', got '" + beta_prior + "'");
    }
    if (!(beta_var > 0.0)) throw ValidationError("prior.beta_var must be > 0");
    if (!(sigma2_shape > 0.0) || !(sigma2_scale > 0.0) || !(tau2_shape > 0.0) ||
        !(tau2_scale > 0.0)) {
      throw ValidationError("inverse-gamma prior shape/scale must be > 0");
    }
    if (!(phi_min > 0.0) || !(phi_max > phi_min)) {
      throw ValidationError("prior.phi_min/phi_max must satisfy 0 < phi_min < phi_max");
    }
    if (threads < 0) throw ValidationError("run.threads must be >= 0");
    sampler::McmcConfig probe = mcmc_config();
    probe.validate();
  }

  void require_paths(std::initializer_list<std::pair<const char*, const std::string*>> paths) const {
    for (const auto& [name, value] : paths) {
      if (value->empty()) {
        throw ValidationError(std::string("config is missing required path data.") + name);
      }
      if (!std::filesystem::exists(*value)) {
        throw ValidationError(std::string("data.") + name + ": file not found: " + *value);
      }
    }
  }

  int effective_threads() const {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }

  model::PriorSpec prior_spec(int n_coef) const {
    model::PriorSpec prior;
    if (beta_prior == "flat") {
      prior.beta = model::FlatBetaPrior{};
    } else {
      model::GaussianBetaPrior g;
      g.mu = Eigen::VectorXd::Constant(n_coef, beta_mean);
      g.V = Eigen::MatrixXd::Identity(n_coef, n_coef) * beta_var;
      prior.beta = g;
    }
    prior.sigma2 = model::InverseGammaPrior{sigma2_shape, sigma2_scale};
    prior.tau2 = model::InverseGammaPrior{tau2_shape, tau2_scale};
    prior.phi = model::UniformPrior{phi_min, phi_max};
    return prior;
  }

  workflow::MethodConfig method_config(int n_coef) const {
    workflow::MethodConfig m;
    m.method = method == "block" ? workflow::Method::block : workflow::Method::cos;
    m.gamma = gamma;
    m.block_factor = block_factor;
    m.prior = prior_spec(n_coef);
    return m;
  }

  sampler::McmcConfig mcmc_config() const {
    sampler::McmcConfig m;
    m.n_chains = chains;
    m.warmup = warmup;
    m.sampling = sampling;
    m.thin = thin;
    m.seed = seed;
    m.target_accept = target_accept;
    return m;
  }

  /// Full canonical serialization: every key in a fixed order.
  std::string canonical() const {
    std::ostringstream out;
    out << "[run]\n"
        << "method = " << method << "\n"
        << "output = " << output << "\n"
        << "threads = " << threads << "\n"
        << "[data]\n"
        << "grid = " << grid << "\n"
        << "regions = " << regions << "\n"
        << "outcomes = " << outcomes << "\n"
        << "predict = " << predict << "\n"
        << "grouping = " << grouping << "\n"
        << "layout = " << layout << "\n"
        << "[kernel]\n"
        << "gamma = " << format_double(gamma) << "\n"
        << "block_factor = " << block_factor << "\n"
        << "[prior]\n"
        << "beta = " << beta_prior << "\n"
        << "beta_mean = " << format_double(beta_mean) << "\n"
        << "beta_var = " << format_double(beta_var) << "\n"
        << "sigma2_shape = " << format_double(sigma2_shape) << "\n"
        << "sigma2_scale = " << format_double(sigma2_scale) << "\n"
        << "tau2_shape = " << format_double(tau2_shape) << "\n"
        << "tau2_scale = " << format_double(tau2_scale) << "\n"
        << "phi_min = " << format_double(phi_min) << "\n"
        << "phi_max = " << format_double(phi_max) << "\n"
        << "[mcmc]\n"
        << "chains = " << chains << "\n"
        << "warmup = " << warmup << "\n"
        << "sampling = " << sampling << "\n"
        << "thin = " << thin << "\n"
        << "seed = " << seed << "\n"
        << "target_accept = " << format_double(target_accept) << "\n"
        << "[simulate]\n"
        << "design = " << design << "\n"
        << "replicates = " << replicates << "\n"
        << "[cv]\n"
        << "k = " << k << "\n";
    return out.str();
  }

  /// The subset that determines a fit: model, data inputs, kernel, prior,
  /// MCMC. `predict` checks this hash against the fit manifest.
  std::string fit_canonical() const {
    std::ostringstream out;
    out << "method = " << method << "\n"
        << "grid = " << grid << "\n"
        << "regions = " << regions << "\n"
        << "outcomes = " << outcomes << "\n"
        << "gamma = " << format_double(gamma) << "\n"
        << "block_factor = " << block_factor << "\n"
        << "beta = " << beta_prior << "\n"
        << "beta_mean = " << format_double(beta_mean) << "\n"
        << "beta_var = " << format_double(beta_var) << "\n"
        << "sigma2_shape = " << format_double(sigma2_shape) << "\n"
        << "sigma2_scale = " << format_double(sigma2_scale) << "\n"
        << "tau2_shape = " << format_double(tau2_shape) << "\n"
        << "tau2_scale = " << format_double(tau2_scale) << "\n"
        << "phi_min = " << format_double(phi_min) << "\n"
        << "phi_max = " << format_double(phi_max) << "\n"
        << "chains = " << chains << "\n"
        << "warmup = " << warmup << "\n"
        << "sampling = " << sampling << "\n"
        << "thin = " << thin << "\n"
        << "seed = " << seed << "\n"
        << "target_accept = " << format_double(target_accept) << "\n";
    return out.str();
  }

  std::uint64_t fit_hash() const { return content_hash(fit_canonical()); }
};

inline RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    std::string line = trim(raw);
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line = trim(std::string_view(line).substr(0, hash));
    }
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ValidationError(where + ": malformed section header '" + line + "'");
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) {
      throw ValidationError(where + ": key '" + key + "' appears before any [section]");
    }
    if (key.empty()) throw ValidationError(where + ": empty key");
    cfg.set(section, key, value, where);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  return parse_config(read_file(path), path);
}

/// Applies a `section.key=value` override (CLI `--set`).
inline void apply_override(RunConfig& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("override must look like section.key=value, got '" + spec + "'");
  }
  const std::string key_path = trim(std::string_view(spec).substr(0, eq));
  const std::string value = trim(std::string_view(spec).substr(eq + 1));
  const auto dot = key_path.find('.');
  if (dot == std::string::npos) {
    throw ValidationError("override key must be section.key, got '" + key_path + "'");
  }
  cfg.set(key_path.substr(0, dot), key_path.substr(dot + 1), value, "--set " + spec);
}

}  // namespace cosgp::io
