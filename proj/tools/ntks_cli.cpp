#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "ntks/experiment.hpp"

namespace fs = std::filesystem;
using namespace ntks;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string image;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "JSON config file");
  sub->add_option("--seed", args.seed, "Override every seed in the config");
  sub->add_option("--out", args.out, "Output directory")->capture_default_str();
  sub->add_option("--image", args.image, "PGM target image (overrides the synthetic target)");
}

ConfigSet load(const CommonArgs& args) {
  ConfigSet set;
  if (!args.config.empty()) set = parse_config(args.config);
  if (args.seed) {
    for (auto& c : set.experiments) c.seed = *args.seed;
    if (set.pe_validation) set.pe_validation->seed = *args.seed;
    if (set.drift_sweep) set.drift_sweep->seed = *args.seed;
  }
  if (!args.image.empty()) {
    for (auto& c : set.experiments) c.image = args.image;
    if (set.drift_sweep) set.drift_sweep->image = args.image;
  }
  return set;
}

// Without a config file every variant runs once with defaults.
std::vector<ExperimentConfig> experiments_or_default(const ConfigSet& set, const CommonArgs& args) {
  if (!set.experiments.empty()) return set.experiments;
  std::vector<ExperimentConfig> out;
  for (Variant v : all_variants()) {
    ExperimentConfig c;
    c.variant = v;
    c.config_id = to_string(v);
    if (args.seed) c.seed = *args.seed;
    if (!args.image.empty()) c.image = args.image;
    out.push_back(c);
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

template <typename Rows>
int report_rows(const Rows& rows) {
  int failed = 0;
  for (const auto& r : rows)
    if (!r.error.empty()) {
      std::cerr << "row failed: " << r.error << "\n";
      ++failed;
    }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NTK spectral statistics and training experiments for coordinate networks"};
  app.require_subcommand(1);
  CommonArgs args;
  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"ntk-stats", "validate-pe", "train", "drift-sweep", "ablate", "spectra"}) {
    subs[name] = app.add_subcommand(name);
    add_common(subs[name], args);
  }
  subs["ntk-stats"]->description("NTK statistics at initialization, one CSV row per config");
  subs["validate-pe"]->description("Closed-form vs Monte Carlo checks for the Fourier feature encoding");
  subs["train"]->description("Finite-width training traces");
  subs["drift-sweep"]->description("Residual and kernel drift versus width");
  subs["ablate"]->description("NTK statistics plus training for each variant");
  subs["spectra"]->description("NTK eigenvalues per variant");
  CLI11_PARSE(app, argc, argv);

  try {
    const ConfigSet set = load(args);
    fs::create_directories(args.out);
    const fs::path out(args.out);

    if (subs["ntk-stats"]->parsed()) {
      const auto rows = run_ntk_stats(experiments_or_default(set, args));
      write_file(out / "ntk_stats.csv", ntk_stats_csv(rows));
      return report_rows(rows);
    }
    if (subs["spectra"]->parsed()) {
      const auto rows = run_ntk_stats(experiments_or_default(set, args));
      write_file(out / "spectra.csv", spectra_csv(rows));
      return report_rows(rows);
    }
    if (subs["ablate"]->parsed()) {
      AblationOptions opt;
      opt.out_dir = args.out;
      const auto rows = run_ablation(experiments_or_default(set, args), opt);
      write_file(out / "ablation.csv", ablation_csv(rows));
      return report_rows(rows);
    }
    if (subs["train"]->parsed()) {
      int status = 0;
      for (const auto& cfg : experiments_or_default(set, args)) {
        const std::size_t every = cfg.record_every ? cfg.record_every : std::max<std::size_t>(1, cfg.steps / 20);
        const TrainResult r = run_training(cfg, every);
        write_file(out / (cfg.config_id + "_train.csv"), train_csv(r));
        if (!r.error.empty()) {
          std::cerr << "row failed: " << r.error << "\n";
          status = 1;
        }
      }
      return status;
    }
    if (subs["validate-pe"]->parsed()) {
      PeValidationConfig pc = set.pe_validation.value_or(PeValidationConfig{});
      if (args.seed) pc.seed = *args.seed;
      const auto rows = run_pe_validation(pc);
      write_file(out / "pe_validation.csv", pe_csv(rows, "pe_validation", pc.seed));
      bool ok = true;
      for (const auto& r : rows) ok = ok && std::isfinite(r.z_score);
      return ok ? 0 : 1;
    }
    if (subs["drift-sweep"]->parsed()) {
      DriftSweepConfig dc = set.drift_sweep.value_or(DriftSweepConfig{});
      if (args.seed) dc.seed = *args.seed;
      if (!args.image.empty()) dc.image = args.image;
      const auto rows = run_drift_sweep(dc);
      write_file(out / "drift_sweep.csv", drift_csv(rows, "drift_sweep"));
      return report_rows(rows);
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
