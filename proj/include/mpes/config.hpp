#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mpes/error.hpp"

namespace mpes {

enum class Gender : std::uint8_t { male, female };

inline char gender_code(Gender g) { return g == Gender::male ? 'm' : 'f'; }

inline Gender parse_gender(std::string_view s) {
  if (s == "m" || s == "M" || s == "male") return Gender::male;
  if (s == "f" || s == "F" || s == "female") return Gender::female;
  throw ConfigError("unknown gender '" + std::string(s) + "'");
}

struct RegionSpec {
  std::string id;
  double pop_male = 0.0;
  double pop_female = 0.0;

  double population(Gender g) const { return g == Gender::male ? pop_male : pop_female; }
};

struct GroupSpec {
  std::string id;
  bool male = true;
  bool female = true;
  int rank = 0;

  bool has(Gender g) const { return g == Gender::male ? male : female; }
};

/// STI-clinic stratum subject to opt-out testing; attendees is the clinic head count.
struct OptOutSpec {
  std::string region;
  std::string group;
  Gender gender = Gender::male;
  double attendees = 0.0;
};

/// Legal-resident fraction gamma for one migrant ethnicity, bounded a priori.
struct LegalMigrantSpec {
  std::string region;
  std::string ethnicity;
  std::string sti_group;
  std::string non_sti_group;
  double lower = 0.0;
  double upper = 1.0;
};

struct StratumSelector {
  std::string region = "*";
  std::string group;
  std::optional<Gender> gender;
};

struct ReportingChannelSpec {
  std::string id;
  std::vector<StratumSelector> applies_to;
  double lower = 0.0;
  double upper = 1.0;
};

struct HierarchySpec {
  std::vector<std::string> groups;
  double national_mean_sd = 10.0;
  double region_sd_scale = 5.0;
  double national_sd_scale = 5.0;
};

enum class ConstrainedParam { rho, pi, delta };

struct OrderSpec {
  ConstrainedParam param = ConstrainedParam::delta;
  std::string greater;
  std::string lesser;
};

struct FloorSpec {
  ConstrainedParam param = ConstrainedParam::delta;
  std::vector<std::string> groups;
  double value = 0.0;
};

struct BoxSpec {
  ConstrainedParam param = ConstrainedParam::rho;
  std::string region;
  std::string group;
  Gender gender = Gender::male;
  double lower = 0.0;
  double upper = 1.0;
};

struct MinOverGroupsSpec {
  std::string group;
};

struct GlobalFloorSpec {
  std::string group;
};

using ConstraintSpec = std::variant<OrderSpec, FloorSpec, BoxSpec, MinOverGroupsSpec, GlobalFloorSpec>;

struct RegistryCategorySpec {
  std::string label;
  std::vector<std::string> groups;
};

struct RegistrySpec {
  std::string unknown_label = "unknown";
  std::vector<RegistryCategorySpec> categories;
};

/// How a reporting fraction enters the registry-scale diagnosed count.
enum class RegistryScaling { divide, multiply };

struct AggregateSpec {
  std::string id;
  std::vector<std::string> groups;
};

struct ModelConfig {
  std::vector<RegionSpec> regions;
  std::vector<GroupSpec> groups;
  std::string simplex_reference;
  std::optional<HierarchySpec> hierarchy;
  std::vector<OptOutSpec> opt_out;
  std::vector<LegalMigrantSpec> legal_migrant;
  std::vector<ReportingChannelSpec> reporting_channels;
  RegistryScaling registry_scaling = RegistryScaling::divide;
  std::vector<std::string> sti_aggregate_groups;
  RegistrySpec registry;
  std::vector<AggregateSpec> report_aggregates;
  std::vector<ConstraintSpec> constraints;
};

namespace detail {

inline ConstrainedParam parse_param(const std::string& s) {
  if (s == "rho") return ConstrainedParam::rho;
  if (s == "pi") return ConstrainedParam::pi;
  if (s == "delta") return ConstrainedParam::delta;
  throw ConfigError("unknown constrained parameter '" + s + "'");
}

inline const RegionSpec& find_region(const ModelConfig& cfg, const std::string& id) {
  for (const auto& r : cfg.regions)
    if (r.id == id) return r;
  throw ConfigError("unknown region '" + id + "'");
}

inline ConstraintSpec parse_constraint(const nlohmann::json& j, const ModelConfig& cfg) {
  const auto type = j.at("type").get<std::string>();
  const auto param = parse_param(j.value("parameter", std::string("delta")));
  if (type == "order") return OrderSpec{param, j.at("greater").get<std::string>(), j.at("lesser").get<std::string>()};
  if (type == "floor")
    return FloorSpec{param, j.at("groups").get<std::vector<std::string>>(), j.at("value").get<double>()};
  if (type == "box") {
    BoxSpec b;
    b.param = param;
    b.region = j.at("region").get<std::string>();
    b.group = j.at("group").get<std::string>();
    b.gender = parse_gender(j.at("gender").get<std::string>());
    // Counts are converted to shares of the region-gender population.
    const double pop = find_region(cfg, b.region).population(b.gender);
    b.lower = j.contains("lower_count") ? j.at("lower_count").get<double>() / pop : j.value("lower", 0.0);
    b.upper = j.contains("upper_count") ? j.at("upper_count").get<double>() / pop : j.value("upper", 1.0);
    if (!(b.lower < b.upper)) throw ConfigError("box constraint on " + b.region + "." + b.group + " has lower >= upper");
    return b;
  }
  if (type == "min_over_groups") return MinOverGroupsSpec{j.at("group").get<std::string>()};
  if (type == "global_floor") return GlobalFloorSpec{j.at("group").get<std::string>()};
  throw ConfigError("unknown constraint type '" + type + "'");
}

}  // namespace detail

inline ModelConfig parse_model_config(const nlohmann::json& j) {
  ModelConfig cfg;
  for (const auto& r : j.at("regions")) {
    RegionSpec spec{r.at("id").get<std::string>(), r.at("pop_male").get<double>(), r.at("pop_female").get<double>()};
    if (!(spec.pop_male > 0.0) || !(spec.pop_female > 0.0))
      throw ConfigError("region '" + spec.id + "' needs positive male and female populations");
    cfg.regions.push_back(spec);
  }
  for (const auto& g : j.at("groups")) {
    GroupSpec spec;
    spec.id = g.at("id").get<std::string>();
    const auto genders = g.value("genders", std::string("mf"));
    spec.male = genders.find('m') != std::string::npos;
    spec.female = genders.find('f') != std::string::npos;
    if (genders.find_first_not_of("mf") != std::string::npos || (!spec.male && !spec.female))
      throw ConfigError("group '" + spec.id + "' has invalid genders '" + genders + "'");
    spec.rank = g.value("rank", static_cast<int>(cfg.groups.size()));
    cfg.groups.push_back(spec);
  }
  cfg.simplex_reference = j.value("simplex_reference", cfg.groups.empty() ? std::string() : cfg.groups.back().id);

  if (j.contains("hierarchy")) {
    const auto& h = j.at("hierarchy");
    HierarchySpec spec;
    spec.groups = h.at("groups").get<std::vector<std::string>>();
    spec.national_mean_sd = h.value("national_mean_sd", spec.national_mean_sd);
    spec.region_sd_scale = h.value("region_sd_scale", spec.region_sd_scale);
    spec.national_sd_scale = h.value("national_sd_scale", spec.national_sd_scale);
    if (!spec.groups.empty()) cfg.hierarchy = spec;
  }
  for (const auto& o : j.value("opt_out", nlohmann::json::array())) {
    cfg.opt_out.push_back(OptOutSpec{o.at("region").get<std::string>(), o.at("group").get<std::string>(),
                                     parse_gender(o.at("gender").get<std::string>()), o.at("attendees").get<double>()});
  }
  for (const auto& l : j.value("legal_migrant", nlohmann::json::array())) {
    LegalMigrantSpec spec{l.at("region").get<std::string>(),     l.at("ethnicity").get<std::string>(),
                          l.at("sti_group").get<std::string>(),  l.at("non_sti_group").get<std::string>(),
                          l.at("lower").get<double>(),           l.at("upper").get<double>()};
    if (!(0.0 <= spec.lower && spec.lower < spec.upper && spec.upper <= 1.0))
      throw ConfigError("legal-migrant bounds for " + spec.region + "." + spec.ethnicity + " must satisfy 0<=lower<upper<=1");
    cfg.legal_migrant.push_back(spec);
  }
  for (const auto& c : j.value("reporting_channels", nlohmann::json::array())) {
    ReportingChannelSpec spec;
    spec.id = c.at("id").get<std::string>();
    spec.lower = c.value("lower", 0.0);
    spec.upper = c.value("upper", 1.0);
    if (!(0.0 <= spec.lower && spec.lower < spec.upper && spec.upper <= 1.0))
      throw ConfigError("reporting channel '" + spec.id + "' bounds must satisfy 0<=lower<upper<=1");
    for (const auto& s : c.at("applies_to")) {
      StratumSelector sel;
      sel.region = s.value("region", std::string("*"));
      sel.group = s.at("group").get<std::string>();
      if (s.contains("gender")) sel.gender = parse_gender(s.at("gender").get<std::string>());
      spec.applies_to.push_back(sel);
    }
    cfg.reporting_channels.push_back(spec);
  }
  const auto scaling = j.value("registry_scaling", std::string("divide"));
  if (scaling == "divide")
    cfg.registry_scaling = RegistryScaling::divide;
  else if (scaling == "multiply")
    cfg.registry_scaling = RegistryScaling::multiply;
  else
    throw ConfigError("registry_scaling must be 'divide' or 'multiply'");

  cfg.sti_aggregate_groups = j.value("sti_aggregate_groups", std::vector<std::string>{});
  if (j.contains("registry")) {
    const auto& r = j.at("registry");
    cfg.registry.unknown_label = r.value("unknown_label", cfg.registry.unknown_label);
    for (const auto& c : r.at("categories"))
      cfg.registry.categories.push_back(
          RegistryCategorySpec{c.at("label").get<std::string>(), c.at("groups").get<std::vector<std::string>>()});
  }
  for (const auto& a : j.value("report_aggregates", nlohmann::json::array()))
    cfg.report_aggregates.push_back(AggregateSpec{a.at("id").get<std::string>(), a.at("groups").get<std::vector<std::string>>()});
  for (const auto& c : j.value("constraints", nlohmann::json::array())) cfg.constraints.push_back(detail::parse_constraint(c, cfg));
  return cfg;
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model configuration '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    return parse_model_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace mpes
