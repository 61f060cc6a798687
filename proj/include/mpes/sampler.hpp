#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "mpes/error.hpp"
#include "mpes/model.hpp"
#include "mpes/priors.hpp"

namespace mpes {

struct SamplerConfig {
  std::size_t n_chains = 3;
  std::size_t n_burn = 30000;
  std::size_t n_keep = 30000;  // retained draws, summed over chains
  std::size_t thin = 0;        // 0: chosen automatically
  std::uint64_t seed = 1;
  double target_accept = 0.44;
  double block_target_accept = 0.234;
  double adapt_scale = 10.0;  // Robbins-Monro gain: min(1, adapt_scale / (t + 1)^adapt_decay)
  double adapt_decay = 0.6;
  double initial_scale = 0.5;
  bool covariance_block = true;
  std::size_t stall_window = 1000;
  double stall_threshold = 0.01;
  bool parallel = true;

  std::size_t draws_per_chain() const { return n_keep / n_chains; }

  /// Thinning interval; automatic thinning spreads the retained draws over as many
  /// post-burn-in iterations as there were burn-in iterations.
  std::size_t effective_thin() const {
    if (thin > 0) return thin;
    const auto per = draws_per_chain();
    return std::max<std::size_t>(1, per == 0 ? 1 : n_burn / per);
  }

  void validate() const {
    if (n_chains == 0) throw ConfigError("number of chains must be positive");
    if (n_keep == 0) throw ConfigError("number of retained draws must be positive");
    if (n_keep % n_chains != 0)
      throw ConfigError("retained draws (" + std::to_string(n_keep) + ") must be a multiple of the chain count (" +
                        std::to_string(n_chains) + ")");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target acceptance must lie in (0,1)");
  }
};

struct ChainResult {
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::vector<double> draws;        // row-major, one row per retained draw
  std::vector<double> log_density;  // per retained draw
  std::vector<double> acceptance;   // per coordinate, post burn-in
  std::vector<double> block_acceptance;
  double covariance_acceptance = 0.0;
  std::vector<double> scales_at_burn_end;
  std::vector<double> scales_final;
  std::vector<std::string> warnings;

  std::size_t size() const { return dim == 0 ? 0 : draws.size() / dim; }
  std::span<const double> draw(std::size_t i) const { return {draws.data() + i * dim, dim}; }
};

struct PosteriorSample {
  std::vector<std::string> names;
  std::vector<ChainResult> chains;
  std::size_t thin = 1;

  std::size_t dimension() const { return names.size(); }
  std::size_t total_draws() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += c.size();
    return n;
  }
  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    for (const auto& c : chains) out.insert(out.end(), c.warnings.begin(), c.warnings.end());
    return out;
  }
  /// Values of one coordinate, per chain.
  std::vector<std::vector<double>> coordinate(std::size_t k) const {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
      std::vector<double> v(c.size());
      for (std::size_t i = 0; i < c.size(); ++i) v[i] = c.draws[i * c.dim + k];
      out.push_back(std::move(v));
    }
    return out;
  }
  template <class F>
  void for_each_draw(F&& f) const {
    for (const auto& c : chains)
      for (std::size_t i = 0; i < c.size(); ++i) f(c.draw(i));
  }
};

namespace detail {

inline double clamp_log_scale(double x) { return std::clamp(x, std::log(1e-8), std::log(1e3)); }

/// Online mean and covariance (Welford).
struct RunningCovariance {
  std::size_t n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;

  explicit RunningCovariance(std::size_t d) : mean(Eigen::VectorXd::Zero(d)), m2(Eigen::MatrixXd::Zero(d, d)) {}
  void add(std::span<const double> x) {
    Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    ++n;
    const Eigen::VectorXd d1 = v - mean;
    mean += d1 / static_cast<double>(n);
    m2.noalias() += d1 * (v - mean).transpose();
  }
  Eigen::MatrixXd covariance() const { return m2 / static_cast<double>(n - 1); }
};

template <LogDensityModel M>
ChainResult run_one_chain(const M& model, const SamplerConfig& cfg, std::size_t chain) {
  ChainResult res;
  const std::size_t d = model.dimension();
  res.dim = d;
  res.seed = mix_seed(cfg.seed, chain);
  std::mt19937_64 rng(res.seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto log_u = [&]() {
    double x;
    do x = unif(rng);
    while (x <= 0.0);
    return std::log(x);
  };

  auto eval = model.evaluator();
  std::vector<double> x = model.initial_point(res.seed);
  double lp = eval(std::span<const double>(x));
  if (!std::isfinite(lp)) throw InitializationError("chain " + std::to_string(chain) + ": initial point has no density");

  std::vector<double> log_scale(d, std::log(cfg.initial_scale));
  const auto blocks = model.blocks();
  std::vector<double> block_log_scale(blocks.size(), std::log(cfg.initial_scale / 2.0));

  const std::size_t per_chain = cfg.draws_per_chain();
  const std::size_t thin = cfg.effective_thin();
  const std::size_t n_post = per_chain * thin;
  const std::size_t n_total = cfg.n_burn + n_post;

  std::vector<std::size_t> accepted(d, 0), window_accepted(d, 0);
  std::vector<std::size_t> block_accepted(blocks.size(), 0);
  std::vector<bool> stalled(d, false);
  std::size_t cov_accepted = 0;

  RunningCovariance running(d);
  const std::size_t cov_start = cfg.n_burn / 4;
  const std::size_t cov_min = std::max<std::size_t>(200, 2 * d);
  std::optional<Eigen::MatrixXd> chol;
  double cov_log_scale = std::log(2.38 / std::sqrt(static_cast<double>(std::max<std::size_t>(d, 1))));
  Eigen::VectorXd z(static_cast<Eigen::Index>(d));

  res.draws.reserve(per_chain * d);
  res.log_density.reserve(per_chain);

  for (std::size_t t = 0; t < n_total; ++t) {
    const bool burning = t < cfg.n_burn;
    const double gain = std::min(1.0, cfg.adapt_scale / std::pow(static_cast<double>(t + 1), cfg.adapt_decay));

    for (std::size_t k = 0; k < d; ++k) {
      const double old = x[k];
      x[k] = old + std::exp(log_scale[k]) * norm(rng);
      const double cand = eval(std::span<const double>(x));
      const double log_alpha = cand - lp;
      const bool acc = std::isfinite(cand) && log_u() < log_alpha;
      if (acc) {
        lp = cand;
      } else {
        x[k] = old;
      }
      if (burning) {
        const double a = std::isfinite(log_alpha) ? std::min(1.0, std::exp(log_alpha)) : 0.0;
        log_scale[k] = clamp_log_scale(log_scale[k] + gain * (a - cfg.target_accept));
      } else if (acc) {
        ++accepted[k];
        ++window_accepted[k];
      }
    }

    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& blk = blocks[b];
      std::vector<double> old(blk.size());
      const double s = std::exp(block_log_scale[b]);
      for (std::size_t j = 0; j < blk.size(); ++j) {
        old[j] = x[blk[j]];
        x[blk[j]] += s * norm(rng);
      }
      const double cand = eval(std::span<const double>(x));
      const double log_alpha = cand - lp;
      const bool acc = std::isfinite(cand) && log_u() < log_alpha;
      if (acc) {
        lp = cand;
      } else {
        for (std::size_t j = 0; j < blk.size(); ++j) x[blk[j]] = old[j];
      }
      if (burning) {
        const double a = std::isfinite(log_alpha) ? std::min(1.0, std::exp(log_alpha)) : 0.0;
        block_log_scale[b] = clamp_log_scale(block_log_scale[b] + gain * (a - cfg.block_target_accept));
      } else if (acc) {
        ++block_accepted[b];
      }
    }

    if (cfg.covariance_block && d > 1) {
      if (burning && t >= cov_start) {
        running.add(x);
        if (running.n >= cov_min && running.n % 200 == 0) {
          Eigen::MatrixXd c = running.covariance();
          const double jitter = 1e-10 * std::max(1.0, c.diagonal().maxCoeff());
          c.diagonal().array() += jitter;
          Eigen::LLT<Eigen::MatrixXd> llt(c);
          if (llt.info() == Eigen::Success) chol = llt.matrixL();
        }
      }
      if (chol) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = norm(rng);
        const Eigen::VectorXd step = std::exp(cov_log_scale) * (*chol) * z;
        std::vector<double> cand_x(x);
        for (std::size_t k = 0; k < d; ++k) cand_x[k] += step[static_cast<Eigen::Index>(k)];
        const double cand = eval(std::span<const double>(cand_x));
        const double log_alpha = cand - lp;
        const bool acc = std::isfinite(cand) && log_u() < log_alpha;
        if (acc) {
          x.swap(cand_x);
          lp = cand;
        }
        if (burning) {
          const double a = std::isfinite(log_alpha) ? std::min(1.0, std::exp(log_alpha)) : 0.0;
          cov_log_scale = clamp_log_scale(cov_log_scale + gain * (a - cfg.block_target_accept));
        } else if (acc) {
          ++cov_accepted;
        }
      }
    }

    if (t + 1 == cfg.n_burn || (cfg.n_burn == 0 && t == 0)) {
      res.scales_at_burn_end.resize(d);
      for (std::size_t k = 0; k < d; ++k) res.scales_at_burn_end[k] = std::exp(log_scale[k]);
    }
    if (!burning) {
      const std::size_t post = t - cfg.n_burn + 1;
      if (post % thin == 0) {
        res.draws.insert(res.draws.end(), x.begin(), x.end());
        res.log_density.push_back(lp);
      }
      if (post % cfg.stall_window == 0) {
        for (std::size_t k = 0; k < d; ++k) {
          const double rate = static_cast<double>(window_accepted[k]) / static_cast<double>(cfg.stall_window);
          if (rate < cfg.stall_threshold && !stalled[k]) {
            stalled[k] = true;
            res.warnings.push_back("chain " + std::to_string(chain) + ": coordinate " + model.coordinate_name(k) +
                                   " accepted " + std::to_string(window_accepted[k]) + " of " +
                                   std::to_string(cfg.stall_window) + " proposals after burn-in");
          }
          window_accepted[k] = 0;
        }
      }
    }
  }

  res.scales_final.resize(d);
  for (std::size_t k = 0; k < d; ++k) res.scales_final[k] = std::exp(log_scale[k]);
  if (res.scales_at_burn_end.empty()) res.scales_at_burn_end = res.scales_final;
  const double denom = static_cast<double>(std::max<std::size_t>(n_post, 1));
  res.acceptance.resize(d);
  for (std::size_t k = 0; k < d; ++k) res.acceptance[k] = static_cast<double>(accepted[k]) / denom;
  for (auto a : block_accepted) res.block_acceptance.push_back(static_cast<double>(a) / denom);
  res.covariance_acceptance = static_cast<double>(cov_accepted) / denom;
  return res;
}

}  // namespace detail

/// Runs the configured number of chains; results depend only on the model, config and seed.
template <LogDensityModel M>
PosteriorSample run_chains(const M& model, const SamplerConfig& cfg) {
  cfg.validate();
  PosteriorSample out;
  out.thin = cfg.effective_thin();
  for (std::size_t k = 0; k < model.dimension(); ++k) out.names.push_back(model.coordinate_name(k));
  out.chains.resize(cfg.n_chains);
  if (cfg.parallel && cfg.n_chains > 1) {
    std::vector<std::exception_ptr> errors(cfg.n_chains);
    std::vector<std::thread> threads;
    for (std::size_t c = 0; c < cfg.n_chains; ++c)
      threads.emplace_back([&, c] {
        try {
          out.chains[c] = detail::run_one_chain(model, cfg, c);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t c = 0; c < cfg.n_chains; ++c) out.chains[c] = detail::run_one_chain(model, cfg, c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence and summaries

/// Classic Gelman-Rubin potential scale reduction factor. nullopt when undefined
/// (fewer than 2 chains or 2 draws, or no within-chain variance).
inline std::optional<double> psrf(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  if (m < 2) return std::nullopt;
  const std::size_t n = chains.front().size();
  if (n < 2) return std::nullopt;
  for (const auto& c : chains)
    if (c.size() != n) return std::nullopt;
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& c = chains[j];
    means[j] = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : c) ss += (v - means[j]) * (v - means[j]);
    vars[j] = ss / static_cast<double>(n - 1);
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  if (!(w > 0.0)) return std::nullopt;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
  double bss = 0.0;
  for (double mu : means) bss += (mu - grand) * (mu - grand);
  const double b = static_cast<double>(n) * bss / static_cast<double>(m - 1);
  const double v = (static_cast<double>(n - 1) / static_cast<double>(n)) * w + b / static_cast<double>(n);
  return std::sqrt(v / w);
}

inline std::optional<double> psrf(const PosteriorSample& s, std::size_t coordinate) { return psrf(s.coordinate(coordinate)); }

/// Effective sample size of one chain by Geyer's initial monotone sequence estimator.
inline double ess_single(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  auto acov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
    return acc / static_cast<double>(n);
  };
  const double g0 = acov(0);
  if (!(g0 > 0.0)) return static_cast<double>(n);
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (acov(2 * k) + acov(2 * k + 1)) / g0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double tau = std::max(2.0 * sum - 1.0, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

inline double ess(const std::vector<std::vector<double>>& chains) {
  double acc = 0.0;
  for (const auto& c : chains) acc += ess_single(c);
  return acc;
}

/// Empirical quantile with linear interpolation between order statistics (type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Summary {
  double median = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
  double mean = 0.0;
  double sd = 0.0;
};

inline Summary summarize_values(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.median = quantile_sorted(v, 0.5);
  s.lower = quantile_sorted(v, 0.025);
  s.upper = quantile_sorted(v, 0.975);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

/// Per-draw values of `f(state)` pooled over chains.
template <class F>
std::vector<double> evaluate_draws(const MpesModel& model, const PosteriorSample& s, F&& f) {
  std::vector<double> out;
  out.reserve(s.total_draws());
  auto st = make_state(model.space());
  s.for_each_draw([&](std::span<const double> u) {
    to_constrained(model.space(), u, st);
    out.push_back(f(st));
  });
  return out;
}

template <class F>
Summary summarize(const MpesModel& model, const PosteriorSample& s, F&& f) {
  return summarize_values(evaluate_draws(model, s, std::forward<F>(f)));
}

struct SubsetRun {
  MpesModel model;
  PosteriorSample sample;
};

/// Fits the model to the direct, indirect or full evidence set.
inline SubsetRun run_subset(const ModelConfig& cfg, const std::vector<EvidenceItem>& items, EvidenceFilter filter,
                            const SamplerConfig& sc) {
  MpesModel model(cfg, filter_evidence(items, filter));
  auto sample = run_chains(model, sc);
  return SubsetRun{std::move(model), std::move(sample)};
}

}  // namespace mpes
