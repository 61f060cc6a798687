#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mpes/config.hpp"
#include "mpes/error.hpp"
#include "mpes/math.hpp"

namespace mpes {

/// One (region, risk group, gender) population cell.
struct Stratum {
  std::size_t region = 0;
  std::size_t group = 0;
  Gender gender = Gender::male;

  friend bool operator==(const Stratum&, const Stratum&) = default;
};

/// Enumerates the valid strata of a configuration and resolves names to indices.
class StrataIndex {
 public:
  StrataIndex() = default;

  explicit StrataIndex(const ModelConfig& cfg) : regions_(cfg.regions), groups_(cfg.groups) {
    std::set<std::string> seen;
    for (const auto& r : regions_)
      if (!seen.insert("region:" + r.id).second) throw ConfigError("duplicate stratum: region '" + r.id + "' listed twice");
    for (const auto& g : groups_)
      if (!seen.insert("group:" + g.id).second) throw ConfigError("duplicate stratum: group '" + g.id + "' listed twice");
    lookup_.assign(regions_.size() * groups_.size() * 2, npos);
    for (std::size_t r = 0; r < regions_.size(); ++r)
      for (std::size_t g = 0; g < groups_.size(); ++g)
        for (Gender s : {Gender::male, Gender::female}) {
          if (!groups_[g].has(s)) continue;
          lookup_[slot(r, g, s)] = strata_.size();
          strata_.push_back(Stratum{r, g, s});
        }
  }

  std::size_t size() const { return strata_.size(); }
  const Stratum& operator[](std::size_t i) const { return strata_[i]; }
  const std::vector<Stratum>& all() const { return strata_; }
  const std::vector<RegionSpec>& regions() const { return regions_; }
  const std::vector<GroupSpec>& groups() const { return groups_; }

  std::optional<std::size_t> find(std::size_t region, std::size_t group, Gender g) const {
    const auto i = lookup_[slot(region, group, g)];
    if (i == npos) return std::nullopt;
    return i;
  }

  std::size_t region_index(std::string_view id) const {
    for (std::size_t r = 0; r < regions_.size(); ++r)
      if (regions_[r].id == id) return r;
    throw ConfigError("unknown region '" + std::string(id) + "'");
  }

  std::size_t group_index(std::string_view id) const {
    for (std::size_t g = 0; g < groups_.size(); ++g)
      if (groups_[g].id == id) return g;
    throw ConfigError("unknown group '" + std::string(id) + "'");
  }

  /// Throws ConfigError for unknown names and for invalid group/gender combinations.
  std::size_t at(std::string_view region, std::string_view group, Gender g) const {
    const auto r = region_index(region);
    const auto k = group_index(group);
    if (auto i = find(r, k, g)) return *i;
    throw ConfigError("invalid stratum " + std::string(region) + "." + std::string(group) + "." + gender_code(g) +
                      ": group has no " + (g == Gender::male ? "male" : "female") + " members");
  }

  std::vector<std::size_t> strata_of(std::size_t region, Gender g) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < strata_.size(); ++i)
      if (strata_[i].region == region && strata_[i].gender == g) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> strata_of_region(std::size_t region) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < strata_.size(); ++i)
      if (strata_[i].region == region) out.push_back(i);
    return out;
  }

  double population(std::size_t s) const { return regions_[strata_[s].region].population(strata_[s].gender); }

  std::string name(std::size_t s) const {
    const auto& st = strata_[s];
    return regions_[st.region].id + "," + groups_[st.group].id + "," + gender_code(st.gender);
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t slot(std::size_t r, std::size_t g, Gender s) const {
    return (r * groups_.size() + g) * 2 + (s == Gender::male ? 0 : 1);
  }

  std::vector<RegionSpec> regions_;
  std::vector<GroupSpec> groups_;
  std::vector<Stratum> strata_;
  std::vector<std::size_t> lookup_;
};

enum class Family {
  rho,
  pi,
  eta,
  delta,
  opt_out_fraction,
  opt_out_position,
  legal_fraction,
  reporting_fraction,
  prevalence_floor,
  eta_region_mean,
  eta_national_mean,
  eta_region_sd,
  eta_national_sd,
  bound_aux,
};

inline const char* family_name(Family f) {
  switch (f) {
    case Family::rho: return "rho";
    case Family::pi: return "pi";
    case Family::eta: return "eta";
    case Family::delta: return "delta";
    case Family::opt_out_fraction: return "opt_out_fraction";
    case Family::opt_out_position: return "opt_out_position";
    case Family::legal_fraction: return "gamma";
    case Family::reporting_fraction: return "reporting";
    case Family::prevalence_floor: return "pi_floor";
    case Family::eta_region_mean: return "eta_bar";
    case Family::eta_national_mean: return "eta_bar_bar";
    case Family::eta_region_sd: return "sigma";
    case Family::eta_national_sd: return "tau";
    case Family::bound_aux: return "aux";
  }
  return "?";
}

enum class Transform { alr, logit, interval_logit, log, identity };

struct Coordinate {
  std::string name;
  Family family = Family::pi;
  Transform transform = Transform::logit;
  std::size_t target = 0;  // stratum, declaration or region index, depending on family
  double lower = 0.0;
  double upper = 1.0;
  std::vector<std::string> constraint_refs;
};

/// Additive-log-ratio block for one region x gender: members are the non-reference strata.
struct SimplexBlock {
  std::size_t region = 0;
  Gender gender = Gender::male;
  std::size_t reference = 0;
  std::vector<std::size_t> members;
  std::vector<std::size_t> coords;
};

/// A hierarchy-governed group in one region: logit pi_male = logit pi_female + eta.
struct HierarchyMember {
  std::size_t region = 0;
  std::size_t group = 0;
  std::size_t female = 0;
  std::size_t male = 0;
  std::size_t coord = 0;
};

struct OptOutDecl {
  std::size_t stratum = 0;
  double attendees = 0.0;
  std::size_t fraction_coord = 0;
  std::size_t position_coord = 0;
};

struct LegalMigrantDecl {
  std::size_t region = 0;
  std::string ethnicity;
  std::size_t sti_group = 0;
  std::size_t non_sti_group = 0;
  double lower = 0.0;
  double upper = 1.0;
  std::size_t coord = 0;
};

struct ReportingChannel {
  std::string id;
  std::vector<std::size_t> strata;
  double lower = 0.0;
  double upper = 1.0;
  std::size_t coord = 0;
};

struct BoundAuxDecl {
  std::string name;
  std::size_t coord = 0;
};

/// Ordered free parameters and the bookkeeping needed to map them onto a BasicState.
struct ParameterSpace {
  ModelConfig config;
  StrataIndex strata;
  std::vector<Coordinate> coords;
  std::vector<SimplexBlock> simplices;
  std::vector<std::optional<std::size_t>> pi_coord;  // nullopt: male prevalence derived through eta
  std::vector<std::size_t> delta_coord;
  std::vector<HierarchyMember> hierarchy;
  std::vector<std::size_t> eta_bar_coord;  // per region, empty without a hierarchy
  std::vector<std::size_t> sigma_coord;
  std::optional<std::size_t> eta_bar_bar_coord;
  std::optional<std::size_t> tau_coord;
  std::vector<OptOutDecl> opt_out;
  std::vector<std::optional<std::size_t>> opt_out_of_stratum;
  std::vector<LegalMigrantDecl> legal_migrant;
  std::vector<ReportingChannel> channels;
  std::vector<std::optional<std::size_t>> channel_of_stratum;
  std::optional<std::size_t> pi_floor_coord;
  std::optional<std::size_t> floor_group;
  std::vector<BoundAuxDecl> bound_aux;

  std::size_t dimension() const { return coords.size(); }
  bool has_hierarchy() const { return !hierarchy.empty(); }

  std::size_t count(Family f) const {
    return static_cast<std::size_t>(std::count_if(coords.begin(), coords.end(), [f](const Coordinate& c) { return c.family == f; }));
  }

  /// Free coordinates of rho, pi and delta; eta coordinates stand in for derived male prevalences.
  std::size_t basic_count() const {
    return count(Family::rho) + count(Family::pi) + count(Family::eta) + count(Family::delta);
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < coords.size(); ++i)
      if (coords[i].name == name) return i;
    throw ConfigError("unknown coordinate '" + std::string(name) + "'");
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(coords.size());
    for (const auto& c : coords) out.push_back(c.name);
    return out;
  }
};

/// Derived opt-out decomposition of an STI-clinic stratum's prevalence.
struct OptOutSplit {
  double fraction = 0.0;  // share of attendees declining a test
  double position = 0.0;  // where p_out sits in (p_in, 1)
  double p_in = 0.0;      // positivity among testers
  double p_out = 0.0;     // positivity among decliners
  double pi_in = 0.0;
  double pi_out = 0.0;
  bool feasible = false;
};

/// One point of the constrained parameter space.
struct BasicState {
  std::vector<double> rho;
  std::vector<double> pi;
  std::vector<double> delta;
  std::vector<double> eta;      // per hierarchy member
  std::vector<double> eta_bar;  // per region
  std::vector<double> sigma;    // per region
  double eta_bar_bar = 0.0;
  double tau = 1.0;
  std::vector<OptOutSplit> opt_out;
  std::vector<double> gamma;
  std::vector<double> reporting;
  std::optional<double> pi_floor;
  std::vector<double> bound_aux;  // relative positions in (0, 1)
};

namespace detail {

inline std::size_t add_coord(ParameterSpace& sp, std::string name, Family f, Transform t, std::size_t target,
                             double lower = 0.0, double upper = 1.0) {
  sp.coords.push_back(Coordinate{std::move(name), f, t, target, lower, upper, {}});
  return sp.coords.size() - 1;
}

inline bool selector_matches(const StrataIndex& idx, const StratumSelector& sel, std::size_t s) {
  const auto& st = idx[s];
  if (sel.region != "*" && idx.regions()[st.region].id != sel.region) return false;
  if (idx.groups()[st.group].id != sel.group) return false;
  if (sel.gender && *sel.gender != st.gender) return false;
  return true;
}

}  // namespace detail

/// Builds the free-parameter layout for a configuration. Bound-informing evidence items
/// contribute one auxiliary coordinate each, named by bound_aux_names.
inline ParameterSpace build_parameter_space(const ModelConfig& cfg, std::span<const std::string> bound_aux_names = {}) {
  ParameterSpace sp;
  sp.config = cfg;
  sp.strata = StrataIndex(cfg);
  const auto& idx = sp.strata;
  const auto n_strata = idx.size();
  if (n_strata == 0) throw ConfigError("configuration defines no strata");

  std::vector<bool> derived_male(n_strata, false);
  if (cfg.hierarchy) {
    for (const auto& gid : cfg.hierarchy->groups) {
      const auto g = idx.group_index(gid);
      if (!idx.groups()[g].male || !idx.groups()[g].female)
        throw ConfigError("hierarchy group '" + gid + "' must have both genders");
      for (std::size_t r = 0; r < idx.regions().size(); ++r) derived_male[*idx.find(r, g, Gender::male)] = true;
    }
  }

  // rho: one ALR block per region x gender
  const auto ref_group = idx.group_index(cfg.simplex_reference);
  for (std::size_t r = 0; r < idx.regions().size(); ++r) {
    for (Gender s : {Gender::male, Gender::female}) {
      const auto members = idx.strata_of(r, s);
      if (members.empty()) continue;
      SimplexBlock block;
      block.region = r;
      block.gender = s;
      auto ref = idx.find(r, ref_group, s);
      block.reference = ref ? *ref : members.back();
      for (auto m : members) {
        if (m == block.reference) continue;
        block.members.push_back(m);
        block.coords.push_back(detail::add_coord(sp, "rho[" + idx.name(m) + "]", Family::rho, Transform::alr, m));
      }
      sp.simplices.push_back(std::move(block));
    }
  }

  sp.pi_coord.assign(n_strata, std::nullopt);
  for (std::size_t s = 0; s < n_strata; ++s)
    if (!derived_male[s]) sp.pi_coord[s] = detail::add_coord(sp, "pi[" + idx.name(s) + "]", Family::pi, Transform::logit, s);
  if (cfg.hierarchy) {
    for (std::size_t r = 0; r < idx.regions().size(); ++r)
      for (const auto& gid : cfg.hierarchy->groups) {
        const auto g = idx.group_index(gid);
        HierarchyMember m{r, g, *idx.find(r, g, Gender::female), *idx.find(r, g, Gender::male), 0};
        m.coord = detail::add_coord(sp, "eta[" + idx.regions()[r].id + "," + gid + "]", Family::eta, Transform::identity,
                                    sp.hierarchy.size());
        sp.hierarchy.push_back(m);
      }
  }
  for (std::size_t s = 0; s < n_strata; ++s)
    sp.delta_coord.push_back(detail::add_coord(sp, "delta[" + idx.name(s) + "]", Family::delta, Transform::logit, s));

  sp.opt_out_of_stratum.assign(n_strata, std::nullopt);
  for (const auto& o : cfg.opt_out) {
    OptOutDecl d;
    d.stratum = idx.at(o.region, o.group, o.gender);
    if (sp.opt_out_of_stratum[d.stratum]) throw ConfigError("duplicate opt-out declaration for " + idx.name(d.stratum));
    if (!(o.attendees > 0.0)) throw ConfigError("opt-out attendees must be positive for " + idx.name(d.stratum));
    d.attendees = o.attendees;
    const auto i = sp.opt_out.size();
    d.fraction_coord = detail::add_coord(sp, "opt_out_fraction[" + idx.name(d.stratum) + "]", Family::opt_out_fraction,
                                         Transform::logit, i);
    d.position_coord = detail::add_coord(sp, "opt_out_position[" + idx.name(d.stratum) + "]", Family::opt_out_position,
                                         Transform::logit, i);
    sp.opt_out_of_stratum[d.stratum] = i;
    sp.opt_out.push_back(d);
  }

  for (const auto& l : cfg.legal_migrant) {
    LegalMigrantDecl d;
    d.region = idx.region_index(l.region);
    d.ethnicity = l.ethnicity;
    d.sti_group = idx.group_index(l.sti_group);
    d.non_sti_group = idx.group_index(l.non_sti_group);
    d.lower = l.lower;
    d.upper = l.upper;
    d.coord = detail::add_coord(sp, "gamma[" + l.region + "," + l.ethnicity + "]", Family::legal_fraction,
                                Transform::interval_logit, sp.legal_migrant.size(), l.lower, l.upper);
    sp.legal_migrant.push_back(d);
  }

  sp.channel_of_stratum.assign(n_strata, std::nullopt);
  for (const auto& c : cfg.reporting_channels) {
    ReportingChannel ch;
    ch.id = c.id;
    ch.lower = c.lower;
    ch.upper = c.upper;
    for (const auto& sel : c.applies_to) {
      if (sel.region != "*") idx.region_index(sel.region);
      idx.group_index(sel.group);
    }
    for (std::size_t s = 0; s < n_strata; ++s) {
      const bool hit = std::any_of(c.applies_to.begin(), c.applies_to.end(),
                                   [&](const StratumSelector& sel) { return detail::selector_matches(idx, sel, s); });
      if (!hit) continue;
      if (sp.channel_of_stratum[s]) throw ConfigError("stratum " + idx.name(s) + " belongs to two reporting channels");
      sp.channel_of_stratum[s] = sp.channels.size();
      ch.strata.push_back(s);
    }
    if (ch.strata.empty()) throw ConfigError("reporting channel '" + c.id + "' matches no strata");
    ch.coord = detail::add_coord(sp, "reporting[" + c.id + "]", Family::reporting_fraction, Transform::interval_logit,
                                 sp.channels.size(), c.lower, c.upper);
    sp.channels.push_back(std::move(ch));
  }

  for (const auto& c : cfg.constraints) {
    if (const auto* gf = std::get_if<GlobalFloorSpec>(&c)) {
      if (sp.pi_floor_coord) throw ConfigError("only one global prevalence floor is supported");
      sp.floor_group = idx.group_index(gf->group);
      sp.pi_floor_coord = detail::add_coord(sp, "pi_floor[" + gf->group + "]", Family::prevalence_floor, Transform::logit, 0);
    }
  }

  if (cfg.hierarchy) {
    for (std::size_t r = 0; r < idx.regions().size(); ++r)
      sp.eta_bar_coord.push_back(detail::add_coord(sp, "eta_bar[" + idx.regions()[r].id + "]", Family::eta_region_mean,
                                                   Transform::identity, r));
    sp.eta_bar_bar_coord = detail::add_coord(sp, "eta_bar_bar", Family::eta_national_mean, Transform::identity, 0);
    for (std::size_t r = 0; r < idx.regions().size(); ++r)
      sp.sigma_coord.push_back(
          detail::add_coord(sp, "sigma[" + idx.regions()[r].id + "]", Family::eta_region_sd, Transform::log, r));
    sp.tau_coord = detail::add_coord(sp, "tau", Family::eta_national_sd, Transform::log, 0);
  }

  for (std::size_t i = 0; i < bound_aux_names.size(); ++i) {
    BoundAuxDecl d{bound_aux_names[i], 0};
    d.coord = detail::add_coord(sp, "aux[" + bound_aux_names[i] + "]", Family::bound_aux, Transform::logit, i);
    sp.bound_aux.push_back(d);
  }
  return sp;
}

inline BasicState make_state(const ParameterSpace& sp) {
  BasicState st;
  const auto n = sp.strata.size();
  st.rho.assign(n, 0.0);
  st.pi.assign(n, 0.0);
  st.delta.assign(n, 0.0);
  st.eta.assign(sp.hierarchy.size(), 0.0);
  st.eta_bar.assign(sp.eta_bar_coord.size(), 0.0);
  st.sigma.assign(sp.sigma_coord.size(), 1.0);
  st.opt_out.assign(sp.opt_out.size(), OptOutSplit{});
  st.gamma.assign(sp.legal_migrant.size(), 0.0);
  st.reporting.assign(sp.channels.size(), 1.0);
  if (sp.pi_floor_coord) st.pi_floor = 0.0;
  st.bound_aux.assign(sp.bound_aux.size(), 0.5);
  return st;
}

/// Recomputes the opt-out decomposition of every declared stratum from rho, pi and the
/// (fraction, position) pair. Infeasible splits are flagged rather than thrown.
inline void derive_opt_out(const ParameterSpace& sp, BasicState& st) {
  for (std::size_t i = 0; i < sp.opt_out.size(); ++i) {
    const auto& d = sp.opt_out[i];
    auto& o = st.opt_out[i];
    const double scale = d.attendees / (sp.strata.population(d.stratum) * st.rho[d.stratum]);
    const double fv = o.fraction * o.position;
    o.p_in = (st.pi[d.stratum] / scale - fv) / (1.0 - fv);
    o.p_out = o.p_in + (1.0 - o.p_in) * o.position;
    o.pi_out = o.fraction * scale * o.p_out;
    o.pi_in = st.pi[d.stratum] - o.pi_out;
    o.feasible = std::isfinite(o.p_in) && o.p_in > 0.0 && o.p_in < 1.0 && o.pi_in > 0.0;
  }
}

/// Maps an unconstrained vector onto `out`, which must come from make_state(sp).
inline void to_constrained(const ParameterSpace& sp, std::span<const double> u, BasicState& out) {
  if (u.size() != sp.dimension())
    throw NumericError("unconstrained vector has dimension " + std::to_string(u.size()) + ", expected " +
                       std::to_string(sp.dimension()));
  for (double x : u)
    if (!std::isfinite(x)) throw NumericError("non-finite unconstrained coordinate");

  for (const auto& b : sp.simplices) {
    double m = 0.0;
    for (auto c : b.coords) m = std::max(m, u[c]);
    double denom = std::exp(-m);
    for (auto c : b.coords) denom += std::exp(u[c] - m);
    out.rho[b.reference] = std::exp(-m) / denom;
    for (std::size_t k = 0; k < b.members.size(); ++k) out.rho[b.members[k]] = std::exp(u[b.coords[k]] - m) / denom;
  }
  for (std::size_t s = 0; s < sp.strata.size(); ++s) {
    if (sp.pi_coord[s]) out.pi[s] = math::inv_logit(u[*sp.pi_coord[s]]);
    out.delta[s] = math::inv_logit(u[sp.delta_coord[s]]);
  }
  for (std::size_t h = 0; h < sp.hierarchy.size(); ++h) {
    const auto& m = sp.hierarchy[h];
    out.eta[h] = u[m.coord];
    out.pi[m.male] = math::inv_logit(math::logit(out.pi[m.female]) + out.eta[h]);
  }
  for (std::size_t r = 0; r < sp.eta_bar_coord.size(); ++r) {
    out.eta_bar[r] = u[sp.eta_bar_coord[r]];
    out.sigma[r] = std::exp(u[sp.sigma_coord[r]]);
  }
  if (sp.eta_bar_bar_coord) out.eta_bar_bar = u[*sp.eta_bar_bar_coord];
  if (sp.tau_coord) out.tau = std::exp(u[*sp.tau_coord]);
  for (std::size_t i = 0; i < sp.opt_out.size(); ++i) {
    out.opt_out[i].fraction = math::inv_logit(u[sp.opt_out[i].fraction_coord]);
    out.opt_out[i].position = math::inv_logit(u[sp.opt_out[i].position_coord]);
  }
  derive_opt_out(sp, out);
  for (std::size_t i = 0; i < sp.legal_migrant.size(); ++i) {
    const auto& d = sp.legal_migrant[i];
    out.gamma[i] = d.lower + (d.upper - d.lower) * math::inv_logit(u[d.coord]);
  }
  for (std::size_t i = 0; i < sp.channels.size(); ++i) {
    const auto& c = sp.channels[i];
    out.reporting[i] = c.lower + (c.upper - c.lower) * math::inv_logit(u[c.coord]);
  }
  if (sp.pi_floor_coord) out.pi_floor = math::inv_logit(u[*sp.pi_floor_coord]);
  for (std::size_t i = 0; i < sp.bound_aux.size(); ++i) out.bound_aux[i] = math::inv_logit(u[sp.bound_aux[i].coord]);
}

inline BasicState to_constrained(const ParameterSpace& sp, std::span<const double> u) {
  auto st = make_state(sp);
  to_constrained(sp, u, st);
  return st;
}

/// Inverse of to_constrained; derived quantities in `st` (male prevalences under the
/// hierarchy, opt-out splits) are ignored.
inline std::vector<double> from_constrained(const ParameterSpace& sp, const BasicState& st) {
  std::vector<double> u(sp.dimension(), 0.0);
  for (const auto& b : sp.simplices) {
    const double log_ref = std::log(st.rho[b.reference]);
    for (std::size_t k = 0; k < b.members.size(); ++k) u[b.coords[k]] = std::log(st.rho[b.members[k]]) - log_ref;
  }
  for (std::size_t s = 0; s < sp.strata.size(); ++s) {
    if (sp.pi_coord[s]) u[*sp.pi_coord[s]] = math::logit(st.pi[s]);
    u[sp.delta_coord[s]] = math::logit(st.delta[s]);
  }
  for (std::size_t h = 0; h < sp.hierarchy.size(); ++h) u[sp.hierarchy[h].coord] = st.eta[h];
  for (std::size_t r = 0; r < sp.eta_bar_coord.size(); ++r) {
    u[sp.eta_bar_coord[r]] = st.eta_bar[r];
    u[sp.sigma_coord[r]] = std::log(st.sigma[r]);
  }
  if (sp.eta_bar_bar_coord) u[*sp.eta_bar_bar_coord] = st.eta_bar_bar;
  if (sp.tau_coord) u[*sp.tau_coord] = std::log(st.tau);
  for (std::size_t i = 0; i < sp.opt_out.size(); ++i) {
    u[sp.opt_out[i].fraction_coord] = math::logit(st.opt_out[i].fraction);
    u[sp.opt_out[i].position_coord] = math::logit(st.opt_out[i].position);
  }
  for (std::size_t i = 0; i < sp.legal_migrant.size(); ++i) {
    const auto& d = sp.legal_migrant[i];
    u[d.coord] = math::logit((st.gamma[i] - d.lower) / (d.upper - d.lower));
  }
  for (std::size_t i = 0; i < sp.channels.size(); ++i) {
    const auto& c = sp.channels[i];
    u[c.coord] = math::logit((st.reporting[i] - c.lower) / (c.upper - c.lower));
  }
  if (sp.pi_floor_coord) u[*sp.pi_floor_coord] = math::logit(*st.pi_floor);
  for (std::size_t i = 0; i < sp.bound_aux.size(); ++i) u[sp.bound_aux[i].coord] = math::logit(st.bound_aux[i]);
  return u;
}

/// log |det d(constrained)/d(unconstrained)|, so that a density on the constrained scale
/// becomes a density on the sampler's scale.
inline double log_jacobian(const ParameterSpace& sp, std::span<const double> u, const BasicState& st) {
  double acc = 0.0;
  for (const auto& b : sp.simplices) {
    if (b.members.empty()) continue;
    acc += std::log(st.rho[b.reference]);
    for (auto m : b.members) acc += std::log(st.rho[m]);
  }
  for (std::size_t i = 0; i < sp.coords.size(); ++i) {
    const auto& c = sp.coords[i];
    switch (c.transform) {
      case Transform::alr:
      case Transform::identity: break;
      case Transform::logit: acc += math::log_inv_logit(u[i]) + math::log1m_inv_logit(u[i]); break;
      case Transform::interval_logit:
        acc += std::log(c.upper - c.lower) + math::log_inv_logit(u[i]) + math::log1m_inv_logit(u[i]);
        break;
      case Transform::log: acc += u[i]; break;
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Functional parameters

/// Expected diagnosed count N rho pi delta of one stratum (no registry adjustment).
inline double eval_mu(const ParameterSpace& sp, const BasicState& st, std::size_t stratum) {
  return sp.strata.population(stratum) * st.rho[stratum] * st.pi[stratum] * st.delta[stratum];
}

/// Registry-scale diagnosed count: mu adjusted by the stratum's reporting channel, if any.
inline double eval_registry_mu(const ParameterSpace& sp, const BasicState& st, std::size_t stratum) {
  const double mu = eval_mu(sp, st, stratum);
  const auto ch = sp.channel_of_stratum[stratum];
  if (!ch) return mu;
  return sp.config.registry_scaling == RegistryScaling::divide ? mu / st.reporting[*ch] : mu * st.reporting[*ch];
}

/// Shares of diagnosed cases by category: xi_k = sum_{s in k} mu_s / sum over all listed strata.
inline std::vector<double> eval_xi(const ParameterSpace& sp, const BasicState& st,
                                   const std::vector<std::vector<std::size_t>>& partition) {
  std::vector<double> xi;
  xi.reserve(partition.size());
  double total = 0.0;
  for (const auto& cat : partition) {
    double acc = 0.0;
    for (auto s : cat) acc += eval_mu(sp, st, s);
    xi.push_back(acc);
    total += acc;
  }
  if (!(total > 0.0)) throw DegenerateDenominatorError("total diagnosed count is zero");
  for (auto& x : xi) x /= total;
  return xi;
}

/// rho-weighted prevalence of a set of strata.
inline double mixture_prevalence(const BasicState& st, std::span<const std::size_t> strata) {
  double num = 0.0, den = 0.0;
  for (auto s : strata) {
    num += st.rho[s] * st.pi[s];
    den += st.rho[s];
  }
  return num / den;
}

/// Diagnosed share among prevalent cases of a set of strata.
inline double mixture_diagnosed(const BasicState& st, std::span<const std::size_t> strata) {
  double num = 0.0, den = 0.0;
  for (auto s : strata) {
    num += st.rho[s] * st.pi[s] * st.delta[s];
    den += st.rho[s] * st.pi[s];
  }
  return num / den;
}

struct StiAggregates {
  double prevalence = 0.0;
  double diagnosed = 0.0;
};

inline StiAggregates eval_sti_aggregates(const BasicState& st, std::span<const std::size_t> strata) {
  double rp = 0.0;
  for (auto s : strata) rp += st.rho[s] * st.pi[s];
  if (!(rp > 0.0)) throw DegenerateDenominatorError("STI aggregate has zero prevalent mass");
  return StiAggregates{mixture_prevalence(st, strata), mixture_diagnosed(st, strata)};
}

/// STI-clinic strata of one region and gender entering the clinic-wide aggregates.
inline std::vector<std::size_t> sti_aggregate_strata(const ParameterSpace& sp, std::size_t region, Gender g) {
  std::vector<std::size_t> out;
  for (const auto& gid : sp.config.sti_aggregate_groups)
    if (auto s = sp.strata.find(region, sp.strata.group_index(gid), g)) out.push_back(*s);
  if (out.empty()) throw ConfigError("no STI aggregate strata for region " + sp.strata.regions()[region].id);
  return out;
}

inline StiAggregates eval_sti_aggregates(const ParameterSpace& sp, const BasicState& st, std::size_t region, Gender g) {
  const auto strata = sti_aggregate_strata(sp, region, g);
  return eval_sti_aggregates(st, strata);
}

/// Legal-resident relative size gamma * (rho_STI + rho_nonSTI) for one migrant ethnicity.
inline double eval_legal_migrant_size(const ParameterSpace& sp, const BasicState& st, std::size_t decl, Gender g) {
  const auto& d = sp.legal_migrant[decl];
  const auto a = sp.strata.find(d.region, d.sti_group, g);
  const auto b = sp.strata.find(d.region, d.non_sti_group, g);
  if (!a || !b) throw ConfigError("legal-migrant declaration has no strata for this gender");
  return st.gamma[decl] * (st.rho[*a] + st.rho[*b]);
}

inline std::size_t find_legal_migrant(const ParameterSpace& sp, std::size_t region, std::string_view ethnicity) {
  for (std::size_t i = 0; i < sp.legal_migrant.size(); ++i)
    if (sp.legal_migrant[i].region == region && sp.legal_migrant[i].ethnicity == ethnicity) return i;
  throw ConfigError("no legal-migrant declaration for " + sp.strata.regions()[region].id + "," + std::string(ethnicity));
}

}  // namespace mpes
