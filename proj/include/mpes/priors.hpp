#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mpes/config.hpp"
#include "mpes/csv.hpp"
#include "mpes/error.hpp"
#include "mpes/math.hpp"
#include "mpes/strata.hpp"

namespace mpes {

/// One side of an inequality between parameter values.
struct Operand {
  enum class Kind { rho, pi, delta, pi_floor, constant } kind = Kind::constant;
  std::size_t stratum = 0;
  double value = 0.0;
};

/// greater >= lesser; the margin greater - lesser is negative exactly when violated.
struct Constraint {
  std::string id;
  Operand greater;
  Operand lesser;
};

struct Violation {
  std::string id;
  double margin = 0.0;
};

/// Declarative constraint specs expanded over every region and gender they apply to.
struct ConstraintSet {
  std::vector<Constraint> items;
  bool check_opt_out = true;  // every opt-out split must be feasible
};

inline double operand_value(const Operand& o, const BasicState& st) {
  switch (o.kind) {
    case Operand::Kind::rho: return st.rho[o.stratum];
    case Operand::Kind::pi: return st.pi[o.stratum];
    case Operand::Kind::delta: return st.delta[o.stratum];
    case Operand::Kind::pi_floor: return st.pi_floor.value_or(0.0);
    case Operand::Kind::constant: return o.value;
  }
  return 0.0;
}

inline double margin(const Constraint& c, const BasicState& st) {
  return operand_value(c.greater, st) - operand_value(c.lesser, st);
}

namespace detail {

inline Operand::Kind operand_kind(ConstrainedParam p) {
  switch (p) {
    case ConstrainedParam::rho: return Operand::Kind::rho;
    case ConstrainedParam::pi: return Operand::Kind::pi;
    case ConstrainedParam::delta: return Operand::Kind::delta;
  }
  return Operand::Kind::delta;
}

inline const char* param_name(ConstrainedParam p) {
  switch (p) {
    case ConstrainedParam::rho: return "rho";
    case ConstrainedParam::pi: return "pi";
    case ConstrainedParam::delta: return "delta";
  }
  return "?";
}

inline std::string label(ConstrainedParam p, const StrataIndex& idx, std::size_t s) {
  return std::string(param_name(p)) + "[" + idx.name(s) + "]";
}

}  // namespace detail

inline ConstraintSet build_constraints(const ParameterSpace& sp) {
  ConstraintSet set;
  const auto& idx = sp.strata;
  const auto n_regions = idx.regions().size();
  for (const auto& spec : sp.config.constraints) {
    if (const auto* o = std::get_if<OrderSpec>(&spec)) {
      const auto g1 = idx.group_index(o->greater);
      const auto g2 = idx.group_index(o->lesser);
      const auto kind = detail::operand_kind(o->param);
      for (std::size_t r = 0; r < n_regions; ++r)
        for (Gender g : {Gender::male, Gender::female}) {
          const auto a = idx.find(r, g1, g);
          const auto b = idx.find(r, g2, g);
          if (!a || !b) continue;
          set.items.push_back(Constraint{"order:" + detail::label(o->param, idx, *a) + ">=" + detail::label(o->param, idx, *b),
                                         Operand{kind, *a, 0.0}, Operand{kind, *b, 0.0}});
        }
    } else if (const auto* f = std::get_if<FloorSpec>(&spec)) {
      const auto kind = detail::operand_kind(f->param);
      for (const auto& gid : f->groups) {
        const auto gi = idx.group_index(gid);
        for (std::size_t r = 0; r < n_regions; ++r)
          for (Gender g : {Gender::male, Gender::female})
            if (auto s = idx.find(r, gi, g))
              set.items.push_back(Constraint{"floor:" + detail::label(f->param, idx, *s) + ">=" + csv::format_exact(f->value),
                                             Operand{kind, *s, 0.0}, Operand{Operand::Kind::constant, 0, f->value}});
      }
    } else if (const auto* b = std::get_if<BoxSpec>(&spec)) {
      const auto s = idx.at(b->region, b->group, b->gender);
      const auto kind = detail::operand_kind(b->param);
      const auto name = detail::label(b->param, idx, s);
      set.items.push_back(Constraint{"box:" + name + ">=" + csv::format_exact(b->lower), Operand{kind, s, 0.0},
                                     Operand{Operand::Kind::constant, 0, b->lower}});
      set.items.push_back(Constraint{"box:" + name + "<=" + csv::format_exact(b->upper),
                                     Operand{Operand::Kind::constant, 0, b->upper}, Operand{kind, s, 0.0}});
    } else if (const auto* m = std::get_if<MinOverGroupsSpec>(&spec)) {
      const auto gi = idx.group_index(m->group);
      for (std::size_t r = 0; r < n_regions; ++r)
        for (Gender g : {Gender::male, Gender::female}) {
          const auto ref = idx.find(r, gi, g);
          if (!ref) continue;
          for (auto s : idx.strata_of(r, g)) {
            if (s == *ref) continue;
            set.items.push_back(Constraint{"min_over:pi[" + idx.name(*ref) + "]<=pi[" + idx.name(s) + "]",
                                           Operand{Operand::Kind::pi, s, 0.0}, Operand{Operand::Kind::pi, *ref, 0.0}});
          }
        }
    } else if (const auto* gf = std::get_if<GlobalFloorSpec>(&spec)) {
      const auto gi = idx.group_index(gf->group);
      for (std::size_t r = 0; r < n_regions; ++r)
        for (Gender g : {Gender::male, Gender::female})
          if (auto s = idx.find(r, gi, g))
            set.items.push_back(Constraint{"global_floor:pi_floor<=pi[" + idx.name(*s) + "]",
                                           Operand{Operand::Kind::pi, *s, 0.0}, Operand{Operand::Kind::pi_floor, 0, 0.0}});
    }
  }
  return set;
}

/// Every violated constraint with its (negative) margin. Empty iff the state is admissible.
inline std::vector<Violation> check_constraints(const ParameterSpace& sp, const BasicState& st, const ConstraintSet& cs) {
  std::vector<Violation> out;
  for (const auto& c : cs.items) {
    const double m = margin(c, st);
    if (!(m >= 0.0)) out.push_back(Violation{c.id, m});
  }
  if (cs.check_opt_out)
    for (std::size_t i = 0; i < sp.opt_out.size(); ++i) {
      const auto& o = st.opt_out[i];
      if (!o.feasible) {
        const double m = std::isfinite(o.p_in) ? std::min(o.p_in, 1.0 - o.p_in) : -1.0;
        out.push_back(Violation{"opt_out_feasible:" + sp.strata.name(sp.opt_out[i].stratum), std::min(m, 0.0)});
      }
    }
  return out;
}

inline bool satisfies_constraints(const ParameterSpace&, const BasicState& st, const ConstraintSet& cs) {
  for (const auto& c : cs.items)
    if (!(margin(c, st) >= 0.0)) return false;
  if (cs.check_opt_out)
    for (const auto& o : st.opt_out)
      if (!o.feasible) return false;
  return true;
}

/// Settings of the male/female log-odds-ratio hierarchy.
struct HierarchyLayer {
  bool active = false;
  double national_mean_sd = 10.0;
  double region_sd_scale = 5.0;
  double national_sd_scale = 5.0;
};

inline HierarchyLayer build_hierarchy(const ParameterSpace& sp) {
  HierarchyLayer h;
  if (sp.config.hierarchy && sp.has_hierarchy()) {
    h.active = true;
    h.national_mean_sd = sp.config.hierarchy->national_mean_sd;
    h.region_sd_scale = sp.config.hierarchy->region_sd_scale;
    h.national_sd_scale = sp.config.hierarchy->national_sd_scale;
  }
  return h;
}

/// The two normal stages: eta | eta_bar, sigma and eta_bar | eta_bar_bar, tau.
inline double hierarchical_log_density(const ParameterSpace& sp, const BasicState& st) {
  double acc = 0.0;
  for (std::size_t h = 0; h < sp.hierarchy.size(); ++h) {
    const auto r = sp.hierarchy[h].region;
    acc += math::normal_lpdf(st.eta[h], st.eta_bar[r], st.sigma[r]);
  }
  for (std::size_t r = 0; r < st.eta_bar.size(); ++r) acc += math::normal_lpdf(st.eta_bar[r], st.eta_bar_bar, st.tau);
  return acc;
}

inline double hyperprior_log_density(const BasicState& st, const HierarchyLayer& h) {
  if (!h.active) return 0.0;
  double acc = math::normal_lpdf(st.eta_bar_bar, 0.0, h.national_mean_sd);
  for (double s : st.sigma) acc += math::half_normal_lpdf(s, h.region_sd_scale);
  acc += math::half_normal_lpdf(st.tau, h.national_sd_scale);
  return acc;
}

/// Joint log-prior on the constrained scale, up to an additive constant.
/// Probabilities without an explicit prior are Uniform(0,1) and simplexes flat Dirichlet.
inline double log_prior(const ParameterSpace& sp, const BasicState& st, const ConstraintSet& cs, const HierarchyLayer& h) {
  if (!satisfies_constraints(sp, st, cs)) return math::neg_inf;
  double acc = 0.0;
  if (h.active) {
    for (double s : st.sigma)
      if (!(s > 0.0)) return math::neg_inf;
    if (!(st.tau > 0.0)) return math::neg_inf;
    acc += hierarchical_log_density(sp, st) + hyperprior_log_density(st, h);
  }
  for (const auto& d : sp.legal_migrant) acc -= std::log(d.upper - d.lower);
  for (const auto& c : sp.channels) acc -= std::log(c.upper - c.lower);
  return acc;
}

// ---------------------------------------------------------------------------
// Prior sampling

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Constraints whose operands all belong to the given stratum set (pi_floor excluded).
inline std::vector<const Constraint*> constraints_within(const ConstraintSet& cs, Operand::Kind kind,
                                                         const std::vector<std::size_t>& strata) {
  auto inside = [&](const Operand& o) {
    if (o.kind == Operand::Kind::constant) return true;
    return o.kind == kind && std::find(strata.begin(), strata.end(), o.stratum) != strata.end();
  };
  std::vector<const Constraint*> out;
  for (const auto& c : cs.items) {
    const bool touches = (c.greater.kind == kind || c.lesser.kind == kind);
    if (touches && inside(c.greater) && inside(c.lesser)) out.push_back(&c);
  }
  return out;
}

}  // namespace detail

/// Draws a constraint-satisfying state by block-wise rejection: simplexes, then prevalences
/// with the hierarchy (per region) and the prevalence floor below them, then diagnosed proportions (per region and gender), then
/// opt-out splits and the remaining bounded parameters. Prevalences of opt-out strata are
/// drawn on the range where an opt-out split can exist. Throws InitializationError when the
/// total number of rejected proposals exceeds `budget`.
inline BasicState sample_from_prior(const ParameterSpace& sp, const ConstraintSet& cs, const HierarchyLayer& h,
                                    std::uint64_t seed, std::size_t budget = 1000000) {
  std::mt19937_64 rng(detail::mix_seed(seed, 0x5eed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto open_unif = [&]() {
    double u;
    do u = unif(rng);
    while (u <= 0.0);
    return u;
  };
  std::normal_distribution<double> stdnorm(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::size_t spent = 0;
  auto charge = [&](const std::string& block) {
    if (++spent > budget)
      throw InitializationError("prior sampler exceeded its rejection budget of " + std::to_string(budget) +
                                " proposals in block '" + block + "'; review the constraint set");
  };

  auto st = make_state(sp);
  const auto& idx = sp.strata;

  // Simplexes: flat Dirichlet, rejected on box constraints.
  for (const auto& b : sp.simplices) {
    std::vector<std::size_t> members = b.members;
    members.push_back(b.reference);
    const auto cons = detail::constraints_within(cs, Operand::Kind::rho, members);
    while (true) {
      double total = 0.0;
      for (auto m : members) total += (st.rho[m] = expo(rng));
      for (auto m : members) st.rho[m] /= total;
      bool ok = true;
      for (const auto* c : cons) ok = ok && margin(*c, st) >= 0.0;
      if (ok) break;
      charge("rho[" + idx.regions()[b.region].id + "," + gender_code(b.gender) + "]");
    }
  }

  auto opt_out_cap = [&](std::size_t s) {
    const auto d = sp.opt_out_of_stratum[s];
    if (!d) return 1.0;
    return std::min(1.0, sp.opt_out[*d].attendees / (idx.population(s) * st.rho[s]));
  };

  // Hyperparameters, then prevalences per region (the hierarchy couples genders within a
  // region). A region that keeps failing sends the sampler back to fresh hyperparameters.
  constexpr std::size_t region_tries = 20000;
  bool placed = false;
  while (!placed) {
    if (h.active) {
      st.eta_bar_bar = h.national_mean_sd * stdnorm(rng);
      st.tau = std::abs(h.national_sd_scale * stdnorm(rng));
      for (std::size_t r = 0; r < st.sigma.size(); ++r) st.sigma[r] = std::abs(h.region_sd_scale * stdnorm(rng));
      for (std::size_t r = 0; r < st.eta_bar.size(); ++r) st.eta_bar[r] = st.eta_bar_bar + st.tau * stdnorm(rng);
    }
    placed = true;
    for (std::size_t r = 0; r < idx.regions().size() && placed; ++r) {
      const auto region_strata = idx.strata_of_region(r);
      const auto cons = detail::constraints_within(cs, Operand::Kind::pi, region_strata);
      for (std::size_t tries = 0;; ++tries) {
        if (tries == region_tries) {
          placed = false;
          break;
        }
        for (auto s : region_strata)
          if (sp.pi_coord[s]) st.pi[s] = opt_out_cap(s) * open_unif();
        for (std::size_t k = 0; k < sp.hierarchy.size(); ++k) {
          const auto& m = sp.hierarchy[k];
          if (m.region != r) continue;
          st.eta[k] = st.eta_bar[r] + st.sigma[r] * stdnorm(rng);
          st.pi[m.male] = math::inv_logit(math::logit(st.pi[m.female]) + st.eta[k]);
        }
        bool ok = true;
        for (auto s : region_strata) {
          ok = ok && math::is_open_probability(st.pi[s]);
          if (sp.opt_out_of_stratum[s]) ok = ok && st.pi[s] < opt_out_cap(s);
        }
        for (const auto* c : cons) ok = ok && margin(*c, st) >= 0.0;
        if (ok) break;
        charge("pi[" + idx.regions()[r].id + "]");
      }
    }
  }
  if (sp.pi_floor_coord) {
    // Uniform below the smallest prevalence it must not exceed.
    double cap = 1.0;
    for (const auto& c : cs.items)
      if (c.lesser.kind == Operand::Kind::pi_floor) cap = std::min(cap, operand_value(c.greater, st));
    st.pi_floor = cap * open_unif();
  }

  // Diagnosed proportions, per region and gender.
  for (std::size_t r = 0; r < idx.regions().size(); ++r)
    for (Gender g : {Gender::male, Gender::female}) {
      const auto strata = idx.strata_of(r, g);
      if (strata.empty()) continue;
      const auto cons = detail::constraints_within(cs, Operand::Kind::delta, strata);
      while (true) {
        for (auto s : strata) st.delta[s] = open_unif();
        bool ok = true;
        for (const auto* c : cons) ok = ok && margin(*c, st) >= 0.0;
        if (ok) break;
        charge("delta[" + idx.regions()[r].id + "," + gender_code(g) + "]");
      }
    }

  // Opt-out splits: uniform on the unit square restricted to the feasible set, which is
  // fraction * position < pi / scale.
  for (std::size_t i = 0; i < sp.opt_out.size(); ++i) {
    const auto s = sp.opt_out[i].stratum;
    const double q = st.pi[s] / (sp.opt_out[i].attendees / (idx.population(s) * st.rho[s]));
    while (true) {
      double f;
      if (q >= 1.0 || open_unif() * (1.0 - std::log(q)) < 1.0)
        f = std::min(q, 1.0) * open_unif();
      else
        f = std::pow(q, open_unif());
      st.opt_out[i].fraction = f;
      st.opt_out[i].position = std::min(1.0, q / f) * open_unif();
      derive_opt_out(sp, st);
      if (st.opt_out[i].feasible) break;
      charge("opt_out[" + idx.name(sp.opt_out[i].stratum) + "]");
    }
  }
  for (std::size_t i = 0; i < sp.legal_migrant.size(); ++i) {
    const auto& d = sp.legal_migrant[i];
    st.gamma[i] = d.lower + (d.upper - d.lower) * open_unif();
  }
  for (std::size_t i = 0; i < sp.channels.size(); ++i) {
    const auto& c = sp.channels[i];
    st.reporting[i] = c.lower + (c.upper - c.lower) * open_unif();
  }
  for (auto& v : st.bound_aux) v = open_unif();

  if (!satisfies_constraints(sp, st, cs)) {
    const auto v = check_constraints(sp, st, cs);
    throw InitializationError("prior sampler produced a state violating '" + v.front().id + "'; review the constraint set");
  }
  return st;
}

}  // namespace mpes
