#pragma once

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpes/mpes.hpp"

namespace mpes::test {

inline std::string source_path(const std::string& rel) { return std::string(MPES_SOURCE_DIR) + "/" + rel; }

inline ModelConfig config(const std::string& json) { return parse_model_config(nlohmann::json::parse(json)); }

inline ModelConfig amsterdam_config() { return load_model_config(source_path("data/amsterdam.json")); }

inline std::vector<EvidenceItem> amsterdam_evidence() { return load_evidence(source_path("data/amsterdam_evidence.csv")); }

inline const std::string evidence_header = "id,region,gender,kind,x,n,target_type,target_params,bias\n";

/// Parses evidence rows written under the standard header.
inline std::vector<EvidenceItem> evidence(const std::string& rows) {
  std::istringstream in(evidence_header + rows);
  return parse_evidence(csv::read(in, "inline"), "inline");
}

/// One region, one female-only group: pi and delta are the only coordinates.
inline const char* one_stratum_json = R"({
  "regions": [{"id": "A", "pop_male": 1000, "pop_female": 1000}],
  "groups": [{"id": "G", "genders": "f"}]
})";

/// One region, two groups with both genders, no hierarchy.
inline const char* two_group_json = R"({
  "regions": [{"id": "A", "pop_male": 1000, "pop_female": 1000}],
  "groups": [{"id": "G1"}, {"id": "G2"}]
})";

/// One region, three female groups.
inline const char* three_group_json = R"({
  "regions": [{"id": "A", "pop_male": 1000, "pop_female": 1000}],
  "groups": [{"id": "G1", "genders": "f"}, {"id": "G2", "genders": "f"}, {"id": "G3", "genders": "f"}]
})";

/// The Amsterdam group structure over three regions without region-specific declarations.
inline ModelConfig three_region_config() {
  std::ifstream in(source_path("data/amsterdam.json"));
  auto j = nlohmann::json::parse(in);
  j["regions"] = nlohmann::json::array({{{"id", "A"}, {"pop_male", 284002}, {"pop_female", 284067}},
                                        {{"id", "R"}, {"pop_male", 200000}, {"pop_female", 200000}},
                                        {{"id", "O"}, {"pop_male", 5000000}, {"pop_female", 5000000}}});
  j.erase("opt_out");
  j.erase("legal_migrant");
  j.erase("reporting_channels");
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : j["constraints"])
    if (c["type"] != "box") cons.push_back(c);
  j["constraints"] = cons;
  return parse_model_config(j);
}

/// Values of every constrained coordinate, in coordinate order.
inline std::vector<double> constrained_values(const ParameterSpace& sp, const BasicState& st) {
  std::vector<double> out;
  for (const auto& c : sp.coords) {
    switch (c.family) {
      case Family::rho: out.push_back(st.rho[c.target]); break;
      case Family::pi: out.push_back(st.pi[c.target]); break;
      case Family::eta: out.push_back(st.eta[c.target]); break;
      case Family::delta: out.push_back(st.delta[c.target]); break;
      case Family::opt_out_fraction: out.push_back(st.opt_out[c.target].fraction); break;
      case Family::opt_out_position: out.push_back(st.opt_out[c.target].position); break;
      case Family::legal_fraction: out.push_back(st.gamma[c.target]); break;
      case Family::reporting_fraction: out.push_back(st.reporting[c.target]); break;
      case Family::prevalence_floor: out.push_back(*st.pi_floor); break;
      case Family::eta_region_mean: out.push_back(st.eta_bar[c.target]); break;
      case Family::eta_national_mean: out.push_back(st.eta_bar_bar); break;
      case Family::eta_region_sd: out.push_back(st.sigma[c.target]); break;
      case Family::eta_national_sd: out.push_back(st.tau); break;
      case Family::bound_aux: out.push_back(st.bound_aux[c.target]); break;
    }
  }
  return out;
}

inline std::vector<double> random_point(std::size_t d, std::mt19937_64& rng, double sd = 1.5) {
  std::normal_distribution<double> n(0.0, sd);
  std::vector<double> u(d);
  for (auto& x : u) x = n(rng);
  return u;
}

inline SamplerConfig quick_sampler(std::size_t burn, std::size_t keep, std::uint64_t seed = 11) {
  SamplerConfig sc;
  sc.n_burn = burn;
  sc.n_keep = keep;
  sc.seed = seed;
  return sc;
}

}  // namespace mpes::test
