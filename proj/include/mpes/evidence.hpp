#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "mpes/config.hpp"
#include "mpes/csv.hpp"
#include "mpes/error.hpp"
#include "mpes/math.hpp"
#include "mpes/strata.hpp"

namespace mpes {

/// How a datum relates to its target: exactly, or only as a one-sided bound.
enum class Bias { exact, lower_bound, upper_bound };

/// Table-2 style partition of evidence: data informing a basic parameter directly, or not.
enum class EvidenceClass { direct, indirect };

struct BinomialCount {
  long long x = 0;
  long long n = 0;
};

struct PoissonTotal {
  long long m = 0;
};

struct MultinomialSplit {
  std::vector<long long> counts;
  long long total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }
};

/// x successes out of a latent number of trials N rho pi of the target stratum.
struct LatentBinomial {
  long long x = 0;
};

using CountData = std::variant<BinomialCount, PoissonTotal, MultinomialSplit, LatentBinomial>;

/// One data point as read from an evidence file, before binding to a parameter space.
struct EvidenceItem {
  std::string id;
  std::string region;
  std::optional<Gender> gender;
  CountData data;
  std::string target_type;
  std::string target_params;
  Bias bias = Bias::exact;
  EvidenceClass evidence_class = EvidenceClass::direct;
  bool marked_ineligible = false;
  std::string source;  // "file:line" for diagnostics
};

namespace target {

struct Rho {
  std::vector<std::size_t> strata;
};
struct Pi {
  std::size_t stratum = 0;
};
struct Delta {
  std::size_t stratum = 0;
};
struct PiDelta {
  std::size_t stratum = 0;
};
struct OptInPi {
  std::size_t stratum = 0;
  std::size_t decl = 0;
};
struct OptOutFraction {
  std::size_t decl = 0;
};
struct Reporting {
  std::size_t channel = 0;
};
struct MixturePi {
  std::vector<std::size_t> strata;
};
struct MixtureDelta {
  std::vector<std::size_t> strata;
};
struct LegalMigrantSize {
  std::size_t decl = 0;
  Gender gender = Gender::male;
};
struct DiagnosedTotal {
  std::vector<std::size_t> strata;
};
struct DiagnosedShare {
  std::vector<std::size_t> numerator;
  std::vector<std::size_t> denominator;
};
struct RhoComposition {
  std::vector<std::vector<std::size_t>> categories;
};
struct DiagnosedComposition {
  std::vector<std::vector<std::size_t>> categories;
};

}  // namespace target

using TargetExpr =
    std::variant<target::Rho, target::Pi, target::Delta, target::PiDelta, target::OptInPi, target::OptOutFraction,
                 target::Reporting, target::MixturePi, target::MixtureDelta, target::LegalMigrantSize,
                 target::DiagnosedTotal, target::DiagnosedShare, target::RhoComposition, target::DiagnosedComposition>;

/// An evidence item resolved against a parameter space.
struct BoundItem {
  EvidenceItem item;
  TargetExpr target;
  std::optional<std::size_t> aux;  // index into ParameterSpace::bound_aux for bound-informing items
};

inline const char* bias_name(Bias b) {
  switch (b) {
    case Bias::exact: return "exact";
    case Bias::lower_bound: return "lower_bound";
    case Bias::upper_bound: return "upper_bound";
  }
  return "?";
}

inline const char* kind_name(const CountData& d) {
  switch (d.index()) {
    case 0: return "binomial";
    case 1: return "poisson";
    case 2: return "multinomial";
    default: return "binomial_latent_n";
  }
}

/// Names of auxiliary coordinates required by bound-informing items, in item order.
inline std::vector<std::string> bound_aux_names(const std::vector<EvidenceItem>& items) {
  std::vector<std::string> out;
  for (const auto& it : items)
    if (it.bias != Bias::exact) out.push_back(it.id);
  return out;
}

namespace detail {

inline std::vector<std::size_t> strata_for_groups(const ParameterSpace& sp, std::size_t region,
                                                  const std::optional<Gender>& gender, const std::string& groups,
                                                  const std::string& where) {
  std::vector<std::size_t> out;
  for (const auto& tok : csv::split(groups, '+')) {
    if (tok.empty()) throw ConfigError(where + ": empty group token in '" + groups + "'");
    std::size_t g;
    try {
      g = sp.strata.group_index(tok);
    } catch (const ConfigError&) {
      throw ConfigError(where + ": unknown stratum token '" + tok + "'");
    }
    bool any = false;
    for (Gender s : {Gender::male, Gender::female}) {
      if (gender && *gender != s) continue;
      if (auto i = sp.strata.find(region, g, s)) {
        out.push_back(*i);
        any = true;
      }
    }
    if (!any) throw ConfigError(where + ": unknown stratum token '" + tok + "' for this gender");
  }
  return out;
}

inline std::size_t single_stratum(const ParameterSpace& sp, std::size_t region, const std::optional<Gender>& gender,
                                  const std::string& groups, const std::string& where) {
  if (!gender) throw ConfigError(where + ": target needs a gender");
  auto s = strata_for_groups(sp, region, gender, groups, where);
  if (s.size() != 1) throw ConfigError(where + ": target needs exactly one group, got '" + groups + "'");
  return s.front();
}

inline std::vector<std::size_t> all_region_strata(const ParameterSpace& sp, std::size_t region,
                                                  const std::optional<Gender>& gender) {
  return gender ? sp.strata.strata_of(region, *gender) : sp.strata.strata_of_region(region);
}

}  // namespace detail

/// Resolves target_type/target_params against the parameter space.
inline TargetExpr bind_target(const ParameterSpace& sp, const EvidenceItem& it) {
  const std::string where = it.source.empty() ? "item '" + it.id + "'" : it.source + " (item '" + it.id + "')";
  const auto& type = it.target_type;
  const auto& params = it.target_params;

  if (type == "reporting_fraction") {
    for (std::size_t c = 0; c < sp.channels.size(); ++c)
      if (sp.channels[c].id == params) return target::Reporting{c};
    throw ConfigError(where + ": unknown reporting channel '" + params + "'");
  }

  std::size_t region;
  try {
    region = sp.strata.region_index(it.region);
  } catch (const ConfigError&) {
    throw ConfigError(where + ": unknown region token '" + it.region + "'");
  }

  if (type == "rho") {
    if (!it.gender) throw ConfigError(where + ": rho targets need a gender");
    return target::Rho{detail::strata_for_groups(sp, region, it.gender, params, where)};
  }
  if (type == "pi") return target::Pi{detail::single_stratum(sp, region, it.gender, params, where)};
  if (type == "delta") return target::Delta{detail::single_stratum(sp, region, it.gender, params, where)};
  if (type == "pi_delta") return target::PiDelta{detail::single_stratum(sp, region, it.gender, params, where)};
  if (type == "pi_in" || type == "opt_out_fraction") {
    const auto s = detail::single_stratum(sp, region, it.gender, params, where);
    const auto decl = sp.opt_out_of_stratum[s];
    if (!decl) throw ConfigError(where + ": stratum " + sp.strata.name(s) + " has no opt-out declaration");
    if (type == "pi_in") return target::OptInPi{s, *decl};
    return target::OptOutFraction{*decl};
  }
  if (type == "mixture_pi" || type == "mixture_delta" || type == "female_mixture_pi" || type == "female_mixture_delta") {
    if (type.starts_with("female") && it.gender != Gender::female)
      throw ConfigError(where + ": " + type + " requires gender f");
    auto strata = detail::strata_for_groups(sp, region, it.gender, params, where);
    if (type.ends_with("_pi")) return target::MixturePi{std::move(strata)};
    return target::MixtureDelta{std::move(strata)};
  }
  if (type == "sti_aggregate_pi" || type == "sti_aggregate_delta") {
    if (!it.gender) throw ConfigError(where + ": STI aggregate targets need a gender");
    std::vector<std::size_t> strata;
    if (params.empty()) {
      strata = sti_aggregate_strata(sp, region, *it.gender);
    } else {
      strata = detail::strata_for_groups(sp, region, it.gender, params, where);
    }
    if (type == "sti_aggregate_pi") return target::MixturePi{std::move(strata)};
    return target::MixtureDelta{std::move(strata)};
  }
  if (type == "legal_migrant_size") {
    if (!it.gender) throw ConfigError(where + ": legal_migrant_size needs a gender");
    for (std::size_t i = 0; i < sp.legal_migrant.size(); ++i)
      if (sp.legal_migrant[i].region == region && sp.legal_migrant[i].ethnicity == params)
        return target::LegalMigrantSize{i, *it.gender};
    throw ConfigError(where + ": unknown legal-migrant ethnicity token '" + params + "'");
  }
  if (type == "diagnosed_total") {
    if (params.empty()) return target::DiagnosedTotal{detail::all_region_strata(sp, region, it.gender)};
    return target::DiagnosedTotal{detail::strata_for_groups(sp, region, it.gender, params, where)};
  }
  if (type == "diagnosed_share") {
    const auto parts = csv::split(params, '|');
    if (parts.size() != 2) throw ConfigError(where + ": diagnosed_share expects 'numerator|denominator'");
    auto num = detail::strata_for_groups(sp, region, it.gender, parts[0], where);
    auto den = detail::strata_for_groups(sp, region, it.gender, parts[1], where);
    for (auto s : num)
      if (std::find(den.begin(), den.end(), s) == den.end())
        throw ConfigError(where + ": diagnosed_share numerator must be contained in the denominator");
    return target::DiagnosedShare{std::move(num), std::move(den)};
  }
  if (type == "rho_composition" || type == "diagnosed_composition") {
    std::vector<std::vector<std::size_t>> cats;
    for (const auto& c : csv::split(params, ';')) cats.push_back(detail::strata_for_groups(sp, region, it.gender, c, where));
    std::vector<std::size_t> seen;
    for (const auto& c : cats)
      for (auto s : c) {
        if (std::find(seen.begin(), seen.end(), s) != seen.end())
          throw ConfigError(where + ": composition categories overlap");
        seen.push_back(s);
      }
    if (type == "rho_composition") return target::RhoComposition{std::move(cats)};
    return target::DiagnosedComposition{std::move(cats)};
  }
  throw ConfigError(where + ": unknown target_type '" + type + "'");
}

inline bool is_composition(const TargetExpr& t) {
  return std::holds_alternative<target::RhoComposition>(t) || std::holds_alternative<target::DiagnosedComposition>(t);
}

inline std::vector<BoundItem> bind_items(const ParameterSpace& sp, const std::vector<EvidenceItem>& items) {
  std::vector<BoundItem> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    const std::string where = it.source.empty() ? "item '" + it.id + "'" : it.source;
    BoundItem b{it, bind_target(sp, it), std::nullopt};
    const bool poisson = std::holds_alternative<PoissonTotal>(it.data);
    const bool multinomial = std::holds_alternative<MultinomialSplit>(it.data);
    const bool total = std::holds_alternative<target::DiagnosedTotal>(b.target);
    if (poisson != total) throw ConfigError(where + ": poisson items must target diagnosed_total and vice versa");
    if (multinomial != is_composition(b.target))
      throw ConfigError(where + ": multinomial items must target a composition and vice versa");
    if (multinomial) {
      const auto& counts = std::get<MultinomialSplit>(it.data).counts;
      const auto ncat = std::visit(
          [](const auto& t) -> std::size_t {
            if constexpr (requires { t.categories; }) return t.categories.size();
            return 0;
          },
          b.target);
      if (counts.size() != ncat)
        throw ConfigError(where + ": multinomial has " + std::to_string(counts.size()) + " counts but " +
                          std::to_string(ncat) + " categories");
    }
    if (std::holds_alternative<LatentBinomial>(it.data) && !std::holds_alternative<target::Delta>(b.target))
      throw ConfigError(where + ": binomial_latent_n items must target delta");
    if (it.bias != Bias::exact) {
      if (!std::holds_alternative<BinomialCount>(it.data))
        throw ConfigError(where + ": bound-informing items must be binomial");
      for (std::size_t i = 0; i < sp.bound_aux.size(); ++i)
        if (sp.bound_aux[i].name == it.id) b.aux = i;
      if (!b.aux) throw ConfigError(where + ": no auxiliary coordinate for bound-informing item '" + it.id + "'");
    }
    out.push_back(std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline double sum_rho(const BasicState& st, const std::vector<std::size_t>& strata) {
  double acc = 0.0;
  for (auto s : strata) acc += st.rho[s];
  return acc;
}

inline double sum_registry_mu(const ParameterSpace& sp, const BasicState& st, const std::vector<std::size_t>& strata) {
  double acc = 0.0;
  for (auto s : strata) acc += eval_registry_mu(sp, st, s);
  return acc;
}

/// Binomial share likelihood with the complement summed directly, so that shares close to
/// one keep their precision.
inline double share_lpmf(const ParameterSpace& sp, const target::DiagnosedShare& t, const BinomialCount& d,
                         const BasicState& st) {
  const double num = sum_registry_mu(sp, st, t.numerator);
  double rest = 0.0;
  for (auto s : t.denominator)
    if (std::find(t.numerator.begin(), t.numerator.end(), s) == t.numerator.end()) rest += eval_registry_mu(sp, st, s);
  const double den = num + rest;
  if (!(num > 0.0) || !(rest > 0.0) || !std::isfinite(den)) return math::neg_inf;
  const double x = static_cast<double>(d.x), n = static_cast<double>(d.n);
  const double v = math::log_choose(n, x) + x * std::log(num / den) + (n - x) * std::log(rest / den);
  return std::isnan(v) ? math::neg_inf : v;
}

}  // namespace detail

/// Probability or rate the item's datum informs; nullopt when the state makes it undefined
/// (infeasible opt-out split, vanishing denominator).
inline std::optional<double> resolve_target(const ParameterSpace& sp, const TargetExpr& t, const BasicState& st) {
  using R = std::optional<double>;
  return std::visit(
      [&](const auto& e) -> R {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, target::Rho>) {
          return detail::sum_rho(st, e.strata);
        } else if constexpr (std::is_same_v<T, target::Pi>) {
          return st.pi[e.stratum];
        } else if constexpr (std::is_same_v<T, target::Delta>) {
          return st.delta[e.stratum];
        } else if constexpr (std::is_same_v<T, target::PiDelta>) {
          return st.pi[e.stratum] * st.delta[e.stratum];
        } else if constexpr (std::is_same_v<T, target::OptInPi>) {
          const auto& o = st.opt_out[e.decl];
          if (!o.feasible) return std::nullopt;
          return o.pi_in;
        } else if constexpr (std::is_same_v<T, target::OptOutFraction>) {
          return st.opt_out[e.decl].fraction;
        } else if constexpr (std::is_same_v<T, target::Reporting>) {
          return st.reporting[e.channel];
        } else if constexpr (std::is_same_v<T, target::MixturePi>) {
          const double den = detail::sum_rho(st, e.strata);
          if (!(den > 0.0)) return std::nullopt;
          return mixture_prevalence(st, e.strata);
        } else if constexpr (std::is_same_v<T, target::MixtureDelta>) {
          double rp = 0.0;
          for (auto s : e.strata) rp += st.rho[s] * st.pi[s];
          if (!(rp > 0.0)) return std::nullopt;
          return mixture_diagnosed(st, e.strata);
        } else if constexpr (std::is_same_v<T, target::LegalMigrantSize>) {
          return eval_legal_migrant_size(sp, st, e.decl, e.gender);
        } else if constexpr (std::is_same_v<T, target::DiagnosedTotal>) {
          return detail::sum_registry_mu(sp, st, e.strata);
        } else if constexpr (std::is_same_v<T, target::DiagnosedShare>) {
          const double den = detail::sum_registry_mu(sp, st, e.denominator);
          if (!(den > 0.0)) return std::nullopt;
          return detail::sum_registry_mu(sp, st, e.numerator) / den;
        } else {
          return std::nullopt;  // compositions resolve through resolve_shares
        }
      },
      t);
}

/// Category probabilities of a composition target.
inline std::optional<std::vector<double>> resolve_shares(const ParameterSpace& sp, const TargetExpr& t,
                                                         const BasicState& st) {
  std::vector<double> w;
  if (const auto* rc = std::get_if<target::RhoComposition>(&t)) {
    for (const auto& c : rc->categories) w.push_back(detail::sum_rho(st, c));
  } else if (const auto* dc = std::get_if<target::DiagnosedComposition>(&t)) {
    for (const auto& c : dc->categories) w.push_back(detail::sum_registry_mu(sp, st, c));
  } else {
    return std::nullopt;
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) return std::nullopt;
  for (auto& x : w) x /= total;
  return w;
}

/// Probability the binomial datum actually applies to, after the bound-informing auxiliary.
inline double apply_bias(const BoundItem& b, double theta, const BasicState& st) {
  if (!b.aux) return theta;
  const double v = st.bound_aux[*b.aux];
  if (b.item.bias == Bias::lower_bound) return theta * v;
  return theta + (1.0 - theta) * v;
}

/// Trials of a latent-n item: N rho pi of the targeted stratum.
inline double latent_trials(const ParameterSpace& sp, const BoundItem& b, const BasicState& st) {
  const auto s = std::get<target::Delta>(b.target).stratum;
  return sp.strata.population(s) * st.rho[s] * st.pi[s];
}

inline double latent_binomial_lpmf(double x, double n, double p) {
  if (!(n >= x) || !math::is_open_probability(p)) return math::neg_inf;
  return math::log_choose(n, x) + x * std::log(p) + (n - x) * std::log1p(-p);
}

/// Log-likelihood contribution of one item; -inf (never NaN) when the target is out of range.
inline double loglik_item(const ParameterSpace& sp, const BoundItem& b, const BasicState& st) {
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, MultinomialSplit>) {
          const auto xi = resolve_shares(sp, b.target, st);
          if (!xi) return math::neg_inf;
          std::vector<double> counts(d.counts.begin(), d.counts.end());
          const double v = math::multinomial_lpmf(counts, *xi);
          return std::isnan(v) ? math::neg_inf : v;
        } else {
          if constexpr (std::is_same_v<T, BinomialCount>) {
            if (const auto* ds = std::get_if<target::DiagnosedShare>(&b.target); ds && !b.aux)
              return detail::share_lpmf(sp, *ds, d, st);
          }
          const auto lambda = resolve_target(sp, b.target, st);
          if (!lambda || !std::isfinite(*lambda)) return math::neg_inf;
          double v;
          if constexpr (std::is_same_v<T, BinomialCount>) {
            v = math::binomial_lpmf(static_cast<double>(d.x), static_cast<double>(d.n), apply_bias(b, *lambda, st));
          } else if constexpr (std::is_same_v<T, PoissonTotal>) {
            v = math::poisson_lpmf(static_cast<double>(d.m), *lambda);
          } else {
            v = latent_binomial_lpmf(static_cast<double>(d.x), latent_trials(sp, b, st), *lambda);
          }
          return std::isnan(v) ? math::neg_inf : v;
        }
      },
      b.item.data);
}

inline double total_loglik(const ParameterSpace& sp, const std::vector<BoundItem>& items, const BasicState& st) {
  double acc = 0.0;
  for (const auto& b : items) {
    const double v = loglik_item(sp, b, st);
    if (v == math::neg_inf) return math::neg_inf;
    acc += v;
  }
  return acc;
}

/// Reason an item is excluded from deviance summaries, or nullopt if eligible.
/// Depends on the data only.
inline std::optional<std::string> exclusion_reason(const EvidenceItem& it) {
  if (it.marked_ineligible) return std::string("marked ineligible");
  if (const auto* b = std::get_if<BinomialCount>(&it.data))
    if (b->x == 0 || b->x == b->n) return std::string("boundary MLE");
  if (const auto* l = std::get_if<LatentBinomial>(&it.data))
    if (l->x == 0) return std::string("boundary MLE");
  return std::nullopt;
}

/// Draws a replicate datum from the item's sampling distribution at `st`.
template <class Rng>
EvidenceItem simulate(const ParameterSpace& sp, const BoundItem& b, const BasicState& st, Rng& rng) {
  EvidenceItem out = b.item;
  std::visit(
      [&](auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, BinomialCount>) {
          const auto lambda = resolve_target(sp, b.target, st);
          if (!lambda) throw NumericError("cannot simulate item '" + b.item.id + "': target undefined");
          d.x = std::binomial_distribution<long long>(d.n, apply_bias(b, *lambda, st))(rng);
        } else if constexpr (std::is_same_v<T, PoissonTotal>) {
          const auto lambda = resolve_target(sp, b.target, st);
          if (!lambda) throw NumericError("cannot simulate item '" + b.item.id + "': target undefined");
          d.m = std::poisson_distribution<long long>(*lambda)(rng);
        } else if constexpr (std::is_same_v<T, MultinomialSplit>) {
          const auto xi = resolve_shares(sp, b.target, st);
          if (!xi) throw NumericError("cannot simulate item '" + b.item.id + "': shares undefined");
          long long remaining = d.total();
          double mass = 1.0;
          for (std::size_t k = 0; k < d.counts.size(); ++k) {
            if (k + 1 == d.counts.size() || remaining == 0) {
              d.counts[k] = k + 1 == d.counts.size() ? remaining : 0;
              remaining -= d.counts[k];
              continue;
            }
            const double p = std::clamp((*xi)[k] / mass, 0.0, 1.0);
            d.counts[k] = std::binomial_distribution<long long>(remaining, p)(rng);
            remaining -= d.counts[k];
            mass -= (*xi)[k];
          }
        } else {
          const double n = latent_trials(sp, b, st);
          const auto trials = static_cast<long long>(std::llround(n));
          d.x = std::binomial_distribution<long long>(trials, st.delta[std::get<target::Delta>(b.target).stratum])(rng);
        }
      },
      out.data);
  return out;
}

// ---------------------------------------------------------------------------
// Evidence files

namespace detail {

inline Bias parse_bias(const std::string& s, const std::string& where) {
  if (s.empty() || s == "exact") return Bias::exact;
  if (s == "lower_bound" || s == "lower") return Bias::lower_bound;
  if (s == "upper_bound" || s == "upper") return Bias::upper_bound;
  throw IngestionError(where + ": column bias: unknown value '" + s + "'");
}

inline EvidenceClass default_class(const std::string& target_type) {
  static const std::vector<std::string> direct = {"rho", "pi", "delta", "pi_in"};
  return std::find(direct.begin(), direct.end(), target_type) != direct.end() ? EvidenceClass::direct
                                                                              : EvidenceClass::indirect;
}

}  // namespace detail

inline std::vector<EvidenceItem> parse_evidence(const csv::Table& t, const std::string& file) {
  static const std::vector<std::string> required = {"id", "region", "gender", "kind", "x", "n", "target_type",
                                                    "target_params", "bias"};
  for (const auto& col : required)
    if (t.column(col) == csv::Table::npos) throw IngestionError(file + ": missing column '" + col + "'");
  const auto c_elig = t.column("deviance_eligible");
  const auto c_class = t.column("evidence_class");

  std::vector<EvidenceItem> items;
  std::set<std::string> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = file + ": line " + std::to_string(t.line_of_row[r]);
    auto get = [&](const char* col) -> const std::string& { return row[t.column(col)]; };
    auto need_int = [&](const char* col) {
      long long v;
      if (!csv::parse_int(get(col), v)) throw IngestionError(where + ": column " + col + ": expected an integer count");
      if (v < 0) throw IngestionError(where + ": column " + col + ": count must be nonnegative");
      return v;
    };

    EvidenceItem it;
    it.id = get("id");
    it.source = where;
    if (it.id.empty()) throw IngestionError(where + ": column id: empty");
    if (!ids.insert(it.id).second) throw IngestionError(where + ": column id: duplicate id '" + it.id + "'");
    it.region = get("region");
    const auto& g = get("gender");
    if (!g.empty() && g != "mf") {
      try {
        it.gender = parse_gender(g);
      } catch (const ConfigError&) {
        throw IngestionError(where + ": column gender: unknown value '" + g + "'");
      }
    }
    const auto& kind = get("kind");
    if (kind == "binomial") {
      BinomialCount b{need_int("x"), need_int("n")};
      if (b.x > b.n) throw IngestionError(where + ": column x: x > n");
      it.data = b;
    } else if (kind == "poisson") {
      it.data = PoissonTotal{need_int("x")};
    } else if (kind == "multinomial") {
      MultinomialSplit m;
      for (const auto& tok : csv::split(get("n"), ';')) {
        long long v;
        if (!csv::parse_int(tok, v) || v < 0)
          throw IngestionError(where + ": column n: expected ';'-separated nonnegative counts");
        m.counts.push_back(v);
      }
      if (m.counts.size() < 2) throw IngestionError(where + ": column n: multinomial needs at least two categories");
      if (!get("x").empty()) {
        long long total;
        if (!csv::parse_int(get("x"), total) || total != m.total())
          throw IngestionError(where + ": column x: multinomial total does not match the category counts");
      }
      it.data = m;
    } else if (kind == "binomial_latent_n") {
      it.data = LatentBinomial{need_int("x")};
    } else {
      throw IngestionError(where + ": column kind: unknown value '" + kind + "'");
    }
    it.target_type = get("target_type");
    it.target_params = get("target_params");
    it.bias = detail::parse_bias(get("bias"), where);
    it.evidence_class = detail::default_class(it.target_type);
    if (c_class != csv::Table::npos && !row[c_class].empty()) {
      if (row[c_class] == "direct") it.evidence_class = EvidenceClass::direct;
      else if (row[c_class] == "indirect") it.evidence_class = EvidenceClass::indirect;
      else throw IngestionError(where + ": column evidence_class: unknown value '" + row[c_class] + "'");
    }
    if (c_elig != csv::Table::npos) {
      const auto& v = row[c_elig];
      if (v == "false" || v == "0" || v == "no") it.marked_ineligible = true;
      else if (!(v.empty() || v == "true" || v == "1" || v == "yes" || v == "auto"))
        throw IngestionError(where + ": column deviance_eligible: unknown value '" + v + "'");
    }
    items.push_back(std::move(it));
  }
  return items;
}

inline std::vector<EvidenceItem> load_evidence(const std::string& path) {
  auto items = parse_evidence(csv::read_file(path), path);
  if (items.empty()) throw ConfigError(path + ": evidence file contains no items");
  return items;
}

inline void write_evidence(std::ostream& out, const std::vector<EvidenceItem>& items) {
  csv::write_row(out, {"id", "region", "gender", "kind", "x", "n", "target_type", "target_params", "bias",
                       "deviance_eligible", "evidence_class"});
  for (const auto& it : items) {
    std::string x, n;
    std::visit(
        [&](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, BinomialCount>) {
            x = std::to_string(d.x);
            n = std::to_string(d.n);
          } else if constexpr (std::is_same_v<T, PoissonTotal>) {
            x = std::to_string(d.m);
          } else if constexpr (std::is_same_v<T, MultinomialSplit>) {
            x = std::to_string(d.total());
            for (std::size_t k = 0; k < d.counts.size(); ++k) n += (k ? ";" : "") + std::to_string(d.counts[k]);
          } else {
            x = std::to_string(d.x);
          }
        },
        it.data);
    csv::write_row(out, {it.id, it.region, it.gender ? std::string(1, gender_code(*it.gender)) : std::string(),
                         kind_name(it.data), x, n, it.target_type, it.target_params, bias_name(it.bias),
                         it.marked_ineligible ? "false" : "auto",
                         it.evidence_class == EvidenceClass::direct ? "direct" : "indirect"});
  }
}

// ---------------------------------------------------------------------------
// Registry preprocessing

struct RegistryRow {
  std::string region;
  Gender gender = Gender::male;
  std::string category;
  long long count = 0;
  std::string source;
};

enum class RegistryMode { sequential, multinomial };

/// Spreads `unknown` over the classified counts in proportion to their size,
/// rounding by largest remainder (ties go to the earlier category).
inline std::vector<long long> redistribute_unknown(std::vector<long long> counts, long long unknown) {
  if (unknown == 0) return counts;
  const long long total = std::accumulate(counts.begin(), counts.end(), 0LL);
  if (total <= 0) throw IngestionError("cannot redistribute unknown-exposure cases: no classified cases");
  std::vector<std::pair<long long, std::size_t>> rem;
  long long assigned = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const long long num = unknown * counts[k];
    const long long add = num / total;
    rem.emplace_back(num % total, k);
    counts[k] += add;
    assigned += add;
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (long long i = 0; i < unknown - assigned; ++i) ++counts[rem[static_cast<std::size_t>(i)].second];
  return counts;
}

inline std::vector<RegistryRow> load_registry(const std::string& path) {
  const auto t = csv::read_file(path);
  for (const char* col : {"region", "gender", "category", "count"})
    if (t.column(col) == csv::Table::npos) throw IngestionError(path + ": missing column '" + col + "'");
  std::vector<RegistryRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = path + ": line " + std::to_string(t.line_of_row[r]);
    RegistryRow rr;
    rr.source = where;
    rr.region = row[t.column("region")];
    try {
      rr.gender = parse_gender(row[t.column("gender")]);
    } catch (const ConfigError&) {
      throw IngestionError(where + ": column gender: unknown value '" + row[t.column("gender")] + "'");
    }
    rr.category = row[t.column("category")];
    if (!csv::parse_int(row[t.column("count")], rr.count) || rr.count < 0)
      throw IngestionError(where + ": column count: expected a nonnegative integer");
    rows.push_back(std::move(rr));
  }
  return rows;
}

/// Turns raw registry counts into a Poisson total and diagnosed-share items per region x gender.
/// In sequential mode each category but the last is a binomial share of the cases not yet
/// accounted for, which factorizes the multinomial exactly.
inline std::vector<EvidenceItem> preprocess_registry(const std::vector<RegistryRow>& rows, const ModelConfig& cfg,
                                                     RegistryMode mode = RegistryMode::sequential) {
  const auto& reg = cfg.registry;
  if (reg.categories.empty()) throw ConfigError("configuration declares no registry categories");
  auto group_has = [&](const std::string& gid, Gender g) {
    for (const auto& gs : cfg.groups)
      if (gs.id == gid) return gs.has(g);
    throw ConfigError("registry category refers to unknown group '" + gid + "'");
  };

  struct Cell {
    std::string region;
    Gender gender;
    std::vector<long long> counts;
    long long unknown = 0;
  };
  std::vector<Cell> cells;
  for (const auto& r : rows) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const Cell& c) { return c.region == r.region && c.gender == r.gender; });
    if (it == cells.end()) {
      cells.push_back(Cell{r.region, r.gender, std::vector<long long>(reg.categories.size(), 0), 0});
      it = cells.end() - 1;
    }
    if (r.category == reg.unknown_label) {
      it->unknown += r.count;
      continue;
    }
    bool found = false;
    for (std::size_t k = 0; k < reg.categories.size(); ++k)
      if (reg.categories[k].label == r.category) {
        it->counts[k] += r.count;
        found = true;
      }
    if (!found) throw IngestionError(r.source + ": unknown registry category '" + r.category + "'");
  }

  std::vector<EvidenceItem> out;
  for (const auto& cell : cells) {
    std::vector<std::size_t> present;
    std::vector<std::string> groups_of;
    for (std::size_t k = 0; k < reg.categories.size(); ++k) {
      std::string joined;
      for (const auto& g : reg.categories[k].groups)
        if (group_has(g, cell.gender)) joined += (joined.empty() ? "" : "+") + g;
      if (joined.empty()) {
        if (cell.counts[k] > 0)
          throw IngestionError("registry category '" + reg.categories[k].label + "' has no strata for gender " +
                               gender_code(cell.gender));
        continue;
      }
      present.push_back(k);
      groups_of.push_back(joined);
    }
    std::vector<long long> counts;
    for (auto k : present) counts.push_back(cell.counts[k]);
    counts = redistribute_unknown(counts, cell.unknown);
    const std::string prefix = "registry." + cell.region + "." + gender_code(cell.gender);
    std::string all;
    for (const auto& g : groups_of) all += (all.empty() ? "" : "+") + g;
    const long long total = std::accumulate(counts.begin(), counts.end(), 0LL);

    EvidenceItem tot;
    tot.id = prefix + ".total";
    tot.region = cell.region;
    tot.gender = cell.gender;
    tot.data = PoissonTotal{total};
    tot.target_type = "diagnosed_total";
    tot.target_params = all;
    tot.evidence_class = EvidenceClass::indirect;
    out.push_back(tot);

    if (mode == RegistryMode::multinomial) {
      EvidenceItem m = tot;
      m.id = prefix + ".composition";
      m.data = MultinomialSplit{counts};
      m.target_type = "diagnosed_composition";
      m.target_params.clear();
      for (std::size_t i = 0; i < groups_of.size(); ++i) m.target_params += (i ? ";" : "") + groups_of[i];
      out.push_back(m);
      continue;
    }
    long long remaining = total;
    for (std::size_t i = 0; i + 1 < present.size(); ++i) {
      std::string den;
      for (std::size_t j = i; j < present.size(); ++j) den += (den.empty() ? "" : "+") + groups_of[j];
      if (remaining > 0) {
        EvidenceItem s = tot;
        s.id = prefix + "." + reg.categories[present[i]].label;
        s.data = BinomialCount{counts[i], remaining};
        s.target_type = "diagnosed_share";
        s.target_params = groups_of[i] + "|" + den;
        out.push_back(s);
      }
      remaining -= counts[i];
    }
  }
  return out;
}

}  // namespace mpes
