#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpes/mpes.hpp"

namespace {

std::uint64_t default_seed() {
  if (const char* s = std::getenv("MPES_SEED")) {
    long long v;
    if (mpes::csv::parse_int(s, v) && v >= 0) return static_cast<std::uint64_t>(v);
    std::cerr << "WARNING: ignoring malformed MPES_SEED='" << s << "'\n";
  }
  return 1;
}

int cmd_validate(const std::string& config, const std::vector<std::string>& evidence,
                 const std::vector<std::string>& registry, const std::string& mode) {
  const auto in = mpes::load_inputs(config, evidence, registry, mpes::parse_registry_mode(mode), &std::cerr);
  const auto e = mpes::eligibility_filter(in.items);
  for (const auto& [i, reason] : e.excluded)
    std::cout << "excluded from deviance: " << in.items[i].id << " (" << reason << ")\n";
  std::cout << in.items.size() << " items, " << e.eligible.size() << " deviance-eligible\n";
  return 0;
}

int cmd_deviance(const std::string& config, const std::vector<std::string>& evidence,
                 const std::vector<std::string>& registry, const std::string& mode, const std::string& filter,
                 const std::string& draws, const std::string& out_dir, double threshold) {
  const auto in = mpes::load_inputs(config, evidence, registry, mpes::parse_registry_mode(mode), &std::cerr);
  mpes::MpesModel model(in.config, mpes::filter_evidence(in.items, mpes::parse_evidence_filter(filter)));
  const auto sample = mpes::read_draws_csv(draws, model);
  const auto rep = mpes::posterior_mean_deviance(model, sample, threshold);
  const auto text = mpes::to_string_csv([&](std::ostream& os) { mpes::write_deviance_csv(os, rep); });
  if (out_dir.empty()) {
    std::cout << text;
  } else {
    std::filesystem::create_directories(out_dir);
    mpes::write_atomically(std::filesystem::path(out_dir) / "deviance.csv", text);
  }
  std::cerr << "posterior mean deviance " << mpes::csv::format_sig(rep.total, 6) << " over " << rep.eligible_count
            << " eligible items\n";
  return 0;
}

int cmd_registry(const std::string& config, const std::string& registry, const std::string& mode) {
  const auto cfg = mpes::load_model_config(config);
  const auto items = mpes::preprocess_registry(mpes::load_registry(registry), cfg, mpes::parse_registry_mode(mode));
  mpes::write_evidence(std::cout, items);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian multi-parameter evidence synthesis for stratified HIV prevalence"};
  app.set_version_flag("--version", MPES_VERSION);
  app.require_subcommand(1);

  std::string config, mode = "sequential", filter = "all", out_dir, manifest_path, draws;
  std::vector<std::string> evidence, registry;
  mpes::SamplerConfig sc;
  sc.seed = default_seed();
  double rhat_threshold = 1.05, deviance_threshold = 4.0;
  bool save_draws = false;

  auto add_inputs = [&](CLI::App* sub, bool required) {
    auto* c = sub->add_option("--config", config, "Model configuration (JSON)")->check(CLI::ExistingFile);
    auto* e = sub->add_option("--evidence", evidence, "Evidence CSV file(s)")->check(CLI::ExistingFile);
    if (required) {
      c->required();
      e->required();
    }
    sub->add_option("--registry", registry, "Raw registry CSV file(s) to preprocess into evidence")
        ->check(CLI::ExistingFile);
    sub->add_option("--registry-mode", mode, "Registry likelihood: sequential or multinomial")
        ->check(CLI::IsMember({"sequential", "multinomial"}));
  };

  auto* run = app.add_subcommand("run", "Fit the model and write summary, deviance and convergence reports");
  add_inputs(run, false);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--manifest", manifest_path, "Rerun from a manifest.json (other flags override nothing but --out)")
      ->check(CLI::ExistingFile);
  run->add_option("--chains", sc.n_chains, "Number of chains")->default_val(3);
  run->add_option("--burn", sc.n_burn, "Burn-in iterations per chain")->default_val(30000);
  run->add_option("--keep", sc.n_keep, "Retained draws in total over all chains")->default_val(30000);
  run->add_option("--thin", sc.thin, "Thinning interval (0 = automatic)")->default_val(0);
  run->add_option("--seed", sc.seed, "Random seed (default: $MPES_SEED or 1)");
  run->add_option("--evidence-filter", filter, "Evidence subset: direct, indirect or all")
      ->check(CLI::IsMember({"direct", "indirect", "all"}));
  run->add_option("--rhat-threshold", rhat_threshold, "Convergence threshold on basic-parameter R-hat");
  run->add_option("--deviance-threshold", deviance_threshold, "Conflict flag threshold on item mean deviance");
  run->add_flag("--save-draws", save_draws, "Also write draws.csv (unconstrained coordinates)");

  auto* validate = app.add_subcommand("validate", "Check configuration and evidence files without sampling");
  add_inputs(validate, true);

  auto* dev = app.add_subcommand("deviance", "Recompute the deviance report from persisted draws");
  add_inputs(dev, true);
  dev->add_option("--draws", draws, "draws.csv written by 'run --save-draws'")->required()->check(CLI::ExistingFile);
  dev->add_option("--evidence-filter", filter, "Evidence subset used for the draws")
      ->check(CLI::IsMember({"direct", "indirect", "all"}));
  dev->add_option("--out", out_dir, "Output directory (default: stdout)");
  dev->add_option("--deviance-threshold", deviance_threshold, "Conflict flag threshold");

  std::string registry_file;
  auto* reg = app.add_subcommand("registry", "Print the evidence rows derived from a raw registry file");
  reg->add_option("--config", config, "Model configuration (JSON)")->required()->check(CLI::ExistingFile);
  reg->add_option("--registry", registry_file, "Raw registry CSV")->required()->check(CLI::ExistingFile);
  reg->add_option("--mode", mode, "sequential or multinomial")->check(CLI::IsMember({"sequential", "multinomial"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      mpes::RunManifest m;
      if (!manifest_path.empty()) {
        m = mpes::load_manifest(manifest_path);
        if (!out_dir.empty()) m.output_dir = out_dir;
      } else {
        if (config.empty() || evidence.empty()) {
          std::cerr << "error: run needs --config and --evidence, or --manifest\n";
          return 2;
        }
        m.config_path = config;
        m.evidence_paths = evidence;
        m.registry_paths = registry;
        m.registry_mode = mode;
        m.output_dir = out_dir;
        m.evidence_filter = filter;
        m.sampler = sc;
        m.rhat_threshold = rhat_threshold;
        m.deviance_threshold = deviance_threshold;
        m.save_draws = save_draws;
      }
      return mpes::execute_run(m, std::cerr).exit_code;
    }
    if (*validate) return cmd_validate(config, evidence, registry, mode);
    if (*dev) return cmd_deviance(config, evidence, registry, mode, filter, draws, out_dir, deviance_threshold);
    if (*reg) return cmd_registry(config, registry_file, mode);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
