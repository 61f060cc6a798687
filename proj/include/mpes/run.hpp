#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpes/diagnostics.hpp"
#include "mpes/evidence.hpp"
#include "mpes/model.hpp"
#include "mpes/report.hpp"
#include "mpes/sampler.hpp"

#ifndef MPES_VERSION
#define MPES_VERSION "0.1.0"
#endif

namespace mpes {

/// Everything needed to reproduce a run.
struct RunManifest {
  std::string config_path;
  std::vector<std::string> evidence_paths;
  std::vector<std::string> registry_paths;
  std::string registry_mode = "sequential";
  std::string output_dir;
  std::string evidence_filter = "all";
  SamplerConfig sampler;
  double rhat_threshold = 1.05;
  double deviance_threshold = 4.0;
  bool save_draws = false;
  std::string version = MPES_VERSION;
  // filled in by execute_run
  std::string status;
  std::string failure;
  double wall_clock_seconds = 0.0;
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["status"] = m.status;
  if (!m.failure.empty()) j["failure"] = m.failure;
  j["config"] = m.config_path;
  j["evidence"] = m.evidence_paths;
  j["registry"] = m.registry_paths;
  j["registry_mode"] = m.registry_mode;
  j["output_dir"] = m.output_dir;
  j["evidence_filter"] = m.evidence_filter;
  j["sampler"] = {{"chains", m.sampler.n_chains}, {"burn", m.sampler.n_burn}, {"keep", m.sampler.n_keep},
                  {"thin", m.sampler.effective_thin()}, {"seed", m.sampler.seed}};
  j["rhat_threshold"] = m.rhat_threshold;
  j["deviance_threshold"] = m.deviance_threshold;
  j["save_draws"] = m.save_draws;
  j["version"] = m.version;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.config_path = j.at("config").get<std::string>();
    m.evidence_paths = j.at("evidence").get<std::vector<std::string>>();
    m.registry_paths = j.value("registry", std::vector<std::string>{});
    m.registry_mode = j.value("registry_mode", m.registry_mode);
    m.output_dir = j.at("output_dir").get<std::string>();
    m.evidence_filter = j.value("evidence_filter", m.evidence_filter);
    const auto& s = j.at("sampler");
    m.sampler.n_chains = s.at("chains").get<std::size_t>();
    m.sampler.n_burn = s.at("burn").get<std::size_t>();
    m.sampler.n_keep = s.at("keep").get<std::size_t>();
    m.sampler.thin = s.at("thin").get<std::size_t>();
    m.sampler.seed = s.at("seed").get<std::uint64_t>();
    m.rhat_threshold = j.value("rhat_threshold", m.rhat_threshold);
    m.deviance_threshold = j.value("deviance_threshold", m.deviance_threshold);
    m.save_draws = j.value("save_draws", m.save_draws);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return manifest_from_json(j);
}

/// Writes via a temporary file and rename so readers never see a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline RegistryMode parse_registry_mode(const std::string& s) {
  if (s == "sequential") return RegistryMode::sequential;
  if (s == "multinomial") return RegistryMode::multinomial;
  throw ConfigError("registry mode must be 'sequential' or 'multinomial'");
}

struct LoadedInputs {
  ModelConfig config;
  std::vector<EvidenceItem> items;
};

/// Loads configuration and evidence (including preprocessed registry files) and checks that
/// every item binds to the model.
inline LoadedInputs load_inputs(const std::string& config_path, const std::vector<std::string>& evidence_paths,
                                const std::vector<std::string>& registry_paths = {},
                                RegistryMode mode = RegistryMode::sequential, std::ostream* log = nullptr) {
  LoadedInputs in;
  in.config = load_model_config(config_path);
  for (const auto& p : evidence_paths) {
    auto items = load_evidence(p);
    in.items.insert(in.items.end(), items.begin(), items.end());
  }
  for (const auto& p : registry_paths) {
    auto items = preprocess_registry(load_registry(p), in.config, mode);
    in.items.insert(in.items.end(), items.begin(), items.end());
  }
  if (in.items.empty()) throw ConfigError("no evidence items supplied");
  std::set<std::string> ids;
  for (const auto& it : in.items)
    if (!ids.insert(it.id).second) throw ConfigError("duplicate evidence id '" + it.id + "' across input files");
  MpesModel probe(in.config, in.items);
  if (log) {
    const auto e = eligibility_filter(in.items);
    *log << "loaded " << in.items.size() << " evidence items (" << e.eligible.size() << " deviance-eligible); "
         << probe.dimension() << " sampler coordinates, " << probe.space().basic_count() << " basic\n";
  }
  return in;
}

struct RunOutcome {
  int exit_code = 0;
  RunManifest manifest;
};

inline std::string to_string_csv(const std::function<void(std::ostream&)>& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

/// Full pipeline: load, fit, and write summary, deviance, convergence and manifest files.
/// Exit code 0 on success, 3 on convergence failure (outputs still written), 2 on errors.
inline RunOutcome execute_run(RunManifest m, std::ostream& log) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  const fs::path dir(m.output_dir);
  auto finish = [&](const std::string& status, const std::string& failure, int code) {
    m.status = status;
    m.failure = failure;
    m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
      fs::create_directories(dir);
      write_atomically(dir / "manifest.json", to_json(m).dump(2) + "\n");
    } catch (const std::exception& e) {
      log << "error: cannot write manifest: " << e.what() << "\n";
    }
    out.exit_code = code;
    out.manifest = m;
    return out;
  };

  try {
    if (m.output_dir.empty()) throw ConfigError("an output directory is required");
    fs::create_directories(dir);
    auto inputs = load_inputs(m.config_path, m.evidence_paths, m.registry_paths, parse_registry_mode(m.registry_mode), &log);
    if (inputs.config.regions.size() == 1 && inputs.config.hierarchy)
      log << "WARNING: single-region configuration; the cross-region stage of the log-odds-ratio hierarchy "
             "degenerates to one region\n";
    const auto filter = parse_evidence_filter(m.evidence_filter);
    auto run = run_subset(inputs.config, inputs.items, filter, m.sampler);
    for (const auto& w : run.sample.warnings()) log << "WARNING: " << w << "\n";

    const auto rows = summarize_rows(run.model, run.sample, report_rows(run.model.space()));
    write_atomically(dir / "summary.csv", to_string_csv([&](std::ostream& os) { write_summary_csv(os, rows); }));
    const auto dev = posterior_mean_deviance(run.model, run.sample, m.deviance_threshold);
    write_atomically(dir / "deviance.csv", to_string_csv([&](std::ostream& os) { write_deviance_csv(os, dev); }));
    const auto conv = convergence_rows(run.model, run.sample);
    write_atomically(dir / "convergence.csv", to_string_csv([&](std::ostream& os) { write_convergence_csv(os, conv); }));
    if (m.save_draws)
      write_atomically(dir / "draws.csv", to_string_csv([&](std::ostream& os) { write_draws_csv(os, run.sample); }));

    log << "posterior mean deviance " << csv::format_sig(dev.total, 6) << " over " << dev.eligible_count
        << " eligible items\n";
    std::string failure;
    std::size_t bad = 0;
    for (const auto& r : conv) {
      if (r.kind != "basic") continue;
      if (r.rhat && *r.rhat > m.rhat_threshold) {
        if (bad++ == 0) failure = "convergence: " + r.name + " has R-hat " + csv::format_sig(*r.rhat);
      }
    }
    if (bad > 0) {
      failure += " (" + std::to_string(bad) + " basic parameters above " + csv::format_sig(m.rhat_threshold) + ")";
      log << "error: " << failure << "\n";
      return finish("FAILED", failure, 3);
    }
    return finish("OK", "", 0);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return finish("FAILED", e.what(), 2);
  }
}

}  // namespace mpes
