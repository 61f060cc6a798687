#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mpes/csv.hpp"
#include "mpes/evidence.hpp"
#include "mpes/math.hpp"
#include "mpes/model.hpp"
#include "mpes/sampler.hpp"

namespace mpes {

/// Log-likelihood of an item at its own maximum-likelihood estimate, or nullopt when the
/// item is excluded from deviance summaries. Latent-n items depend on the state through
/// their trial count and are handled by the three-argument overload.
inline std::optional<double> saturated_loglik(const EvidenceItem& it) {
  if (exclusion_reason(it)) return std::nullopt;
  return std::visit(
      [](const auto& d) -> std::optional<double> {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, BinomialCount>) {
          const double x = static_cast<double>(d.x), n = static_cast<double>(d.n);
          return math::log_choose(n, x) + math::xlogy(x, x / n) + math::xlogy(n - x, (n - x) / n);
        } else if constexpr (std::is_same_v<T, PoissonTotal>) {
          const double m = static_cast<double>(d.m);
          return math::xlogy(m, m) - m - std::lgamma(m + 1.0);
        } else if constexpr (std::is_same_v<T, MultinomialSplit>) {
          const double total = static_cast<double>(d.total());
          double acc = std::lgamma(total + 1.0);
          for (auto c : d.counts) {
            const double x = static_cast<double>(c);
            acc += math::xlogy(x, total > 0 ? x / total : 0.0) - std::lgamma(x + 1.0);
          }
          return acc;
        } else {
          return std::nullopt;
        }
      },
      it.data);
}

inline std::optional<double> saturated_loglik(const ParameterSpace& sp, const BoundItem& b, const BasicState& st) {
  if (const auto* l = std::get_if<LatentBinomial>(&b.item.data)) {
    if (exclusion_reason(b.item)) return std::nullopt;
    const double x = static_cast<double>(l->x);
    const double n = latent_trials(sp, b, st);
    if (!(n >= x)) return math::neg_inf;
    const double p = std::min(1.0, x / n);
    return math::log_choose(n, x) + math::xlogy(x, p) + math::xlogy(n - x, 1.0 - p);
  }
  return saturated_loglik(b.item);
}

/// Standardized deviance -2 (loglik - saturated) of one eligible item; +inf when the
/// model assigns the datum zero likelihood.
inline double item_deviance(const ParameterSpace& sp, const BoundItem& b, const BasicState& st) {
  const auto sat = saturated_loglik(sp, b, st);
  if (!sat) return std::numeric_limits<double>::quiet_NaN();
  const double ll = loglik_item(sp, b, st);
  if (ll == math::neg_inf) return std::numeric_limits<double>::infinity();
  return -2.0 * (ll - *sat);
}

struct Eligibility {
  std::vector<std::size_t> eligible;
  std::vector<std::pair<std::size_t, std::string>> excluded;
};

inline Eligibility eligibility_filter(const std::vector<EvidenceItem>& items) {
  Eligibility e;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (auto reason = exclusion_reason(items[i])) e.excluded.emplace_back(i, *reason);
    else e.eligible.push_back(i);
  }
  return e;
}

inline Eligibility eligibility_filter(const std::vector<BoundItem>& items) {
  std::vector<EvidenceItem> raw;
  raw.reserve(items.size());
  for (const auto& b : items) raw.push_back(b.item);
  return eligibility_filter(raw);
}

/// Total deviance over the eligible items at one state.
inline double deviance(const ParameterSpace& sp, const std::vector<BoundItem>& items, const BasicState& st) {
  double acc = 0.0;
  for (const auto& b : items) {
    if (exclusion_reason(b.item)) continue;
    acc += item_deviance(sp, b, st);
  }
  return acc;
}

struct ItemDeviance {
  std::string id;
  std::string region;
  std::string target_type;
  double mean = 0.0;  // NaN for excluded items
  bool flagged = false;
  std::optional<std::string> excluded;
};

struct DevianceReport {
  double total = 0.0;
  std::size_t eligible_count = 0;
  std::size_t nominal_count = 0;
  std::size_t infinite_draws = 0;
  double threshold = 4.0;
  std::vector<ItemDeviance> items;
};

/// Posterior mean of each eligible item's deviance; items above `threshold` are flagged.
inline DevianceReport posterior_mean_deviance(const MpesModel& model, const PosteriorSample& sample,
                                              double threshold = 4.0) {
  const auto& sp = model.space();
  const auto& items = model.items();
  DevianceReport rep;
  rep.threshold = threshold;
  rep.nominal_count = items.size();
  std::vector<double> sums(items.size(), 0.0);
  std::size_t draws = 0;
  auto st = make_state(sp);
  sample.for_each_draw([&](std::span<const double> u) {
    to_constrained(sp, u, st);
    bool infinite = false;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (exclusion_reason(items[i].item)) continue;
      const double d = item_deviance(sp, items[i], st);
      if (std::isinf(d)) infinite = true;
      sums[i] += d;
    }
    if (infinite) ++rep.infinite_draws;
    ++draws;
  });
  for (std::size_t i = 0; i < items.size(); ++i) {
    ItemDeviance d;
    d.id = items[i].item.id;
    d.region = items[i].item.region;
    d.target_type = items[i].item.target_type;
    d.excluded = exclusion_reason(items[i].item);
    if (d.excluded) {
      d.mean = std::numeric_limits<double>::quiet_NaN();
    } else {
      d.mean = draws ? sums[i] / static_cast<double>(draws) : std::numeric_limits<double>::quiet_NaN();
      d.flagged = d.mean > threshold;
      rep.total += d.mean;
      ++rep.eligible_count;
    }
    rep.items.push_back(std::move(d));
  }
  return rep;
}

inline void write_deviance_csv(std::ostream& out, const DevianceReport& rep) {
  csv::write_row(out, {"item_id", "region", "target_type", "mean_deviance", "flag", "exclusion_reason"});
  for (const auto& d : rep.items)
    csv::write_row(out, {d.id, d.region, d.target_type, d.excluded ? "" : csv::format_sig(d.mean),
                         d.flagged ? "conflict" : "", d.excluded.value_or("")});
  csv::write_row(out, {"TOTAL", "", "", csv::format_sig(rep.total, 6), "",
                       "eligible " + std::to_string(rep.eligible_count) + " of " + std::to_string(rep.nominal_count)});
}

}  // namespace mpes
