#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpes/config.hpp"
#include "mpes/error.hpp"
#include "mpes/evidence.hpp"
#include "mpes/priors.hpp"
#include "mpes/strata.hpp"

namespace mpes {

/// What the sampler needs from a target distribution on R^d.
template <class M>
concept LogDensityModel = requires(const M& m, std::size_t i, std::uint64_t seed, std::span<const double> u) {
  { m.dimension() } -> std::convertible_to<std::size_t>;
  { m.coordinate_name(i) } -> std::convertible_to<std::string>;
  { m.initial_point(seed) } -> std::convertible_to<std::vector<double>>;
  { m.blocks() } -> std::convertible_to<std::vector<std::vector<std::size_t>>>;
  { m.evaluator()(u) } -> std::convertible_to<double>;
};

/// The full evidence-synthesis posterior on the unconstrained scale.
class MpesModel {
 public:
  MpesModel(const ModelConfig& cfg, std::vector<EvidenceItem> items)
      : space_(build_parameter_space(cfg, bound_aux_names(items))),
        items_(bind_items(space_, items)),
        constraints_(build_constraints(space_)),
        hierarchy_(build_hierarchy(space_)) {}

  const ParameterSpace& space() const { return space_; }
  const std::vector<BoundItem>& items() const { return items_; }
  const ConstraintSet& constraints() const { return constraints_; }
  const HierarchyLayer& hierarchy() const { return hierarchy_; }

  std::size_t dimension() const { return space_.dimension(); }
  std::string coordinate_name(std::size_t i) const { return space_.coords[i].name; }

  BasicState state(std::span<const double> u) const { return to_constrained(space_, u); }

  /// Log posterior (up to a constant) on the unconstrained scale, Jacobian included.
  double log_density(std::span<const double> u, BasicState& scratch) const {
    to_constrained(space_, u, scratch);
    for (std::size_t s = 0; s < space_.strata.size(); ++s)
      if (!(scratch.rho[s] > 0.0 && scratch.rho[s] <= 1.0) || !math::is_open_probability(scratch.pi[s]) ||
          !math::is_open_probability(scratch.delta[s]))
        return math::neg_inf;
    const double lp = log_prior(space_, scratch, constraints_, hierarchy_);
    if (lp == math::neg_inf) return lp;
    const double ll = total_loglik(space_, items_, scratch);
    if (ll == math::neg_inf) return ll;
    const double v = lp + ll + log_jacobian(space_, u, scratch);
    return std::isfinite(v) ? v : math::neg_inf;
  }

  double log_density(std::span<const double> u) const {
    auto scratch = make_state(space_);
    return log_density(u, scratch);
  }

  class Evaluator {
   public:
    explicit Evaluator(const MpesModel& m) : model_(&m), scratch_(make_state(m.space_)) {}
    double operator()(std::span<const double> u) { return model_->log_density(u, scratch_); }

   private:
    const MpesModel* model_;
    BasicState scratch_;
  };

  Evaluator evaluator() const { return Evaluator(*this); }

  /// Coordinates updated jointly: one block per simplex with more than one free coordinate.
  std::vector<std::vector<std::size_t>> blocks() const {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& b : space_.simplices)
      if (b.coords.size() > 1) out.push_back(b.coords);
    return out;
  }

  /// Unconstrained starting point drawn from the prior, retried until the posterior is finite.
  std::vector<double> initial_point(std::uint64_t seed, std::size_t attempts = 1000) const {
    auto scratch = make_state(space_);
    for (std::size_t k = 0; k < attempts; ++k) {
      const auto st = sample_from_prior(space_, constraints_, hierarchy_, detail::mix_seed(seed, k));
      auto u = from_constrained(space_, st);
      bool finite = true;
      for (double x : u) finite = finite && std::isfinite(x);
      if (finite && std::isfinite(log_density(u, scratch))) return u;
    }
    throw InitializationError("no prior draw with finite posterior density after " + std::to_string(attempts) +
                              " attempts; check that the evidence is compatible with the constraints");
  }

 private:
  ParameterSpace space_;
  std::vector<BoundItem> items_;
  ConstraintSet constraints_;
  HierarchyLayer hierarchy_;
};

static_assert(LogDensityModel<MpesModel>);

enum class EvidenceFilter { all, direct, indirect };

inline EvidenceFilter parse_evidence_filter(const std::string& s) {
  if (s == "all") return EvidenceFilter::all;
  if (s == "direct") return EvidenceFilter::direct;
  if (s == "indirect") return EvidenceFilter::indirect;
  throw ConfigError("evidence filter must be one of direct, indirect, all (got '" + s + "')");
}

inline const char* evidence_filter_name(EvidenceFilter f) {
  switch (f) {
    case EvidenceFilter::all: return "all";
    case EvidenceFilter::direct: return "direct";
    case EvidenceFilter::indirect: return "indirect";
  }
  return "?";
}

inline std::vector<EvidenceItem> filter_evidence(const std::vector<EvidenceItem>& items, EvidenceFilter f) {
  std::vector<EvidenceItem> out;
  for (const auto& it : items) {
    if (f == EvidenceFilter::direct && it.evidence_class != EvidenceClass::direct) continue;
    if (f == EvidenceFilter::indirect && it.evidence_class != EvidenceClass::indirect) continue;
    out.push_back(it);
  }
  if (out.empty())
    throw ConfigError(std::string("evidence filter '") + evidence_filter_name(f) + "' leaves no evidence items");
  return out;
}

}  // namespace mpes
