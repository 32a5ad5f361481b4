#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ntks/dynamics.hpp"
#include "ntks/encoding.hpp"
#include "ntks/models.hpp"
#include "ntks/ntk.hpp"
#include "ntks/signals.hpp"

namespace ntks {

enum class Variant { base, base_norm, rff_pe_enc, rff_pe_enc_norm, rff_pe_enc_topk, hada_nonorm, hada, hada_topk };

const char* to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& s);
const std::vector<Variant>& all_variants();

struct VariantTraits {
  bool encoded = false;
  Mode mode = Mode::baseline;
  Normalization::Kind norm = Normalization::Kind::none;
  bool modulated = false;
};
VariantTraits traits(Variant v);

struct ExperimentConfig {
  std::string config_id;
  Variant variant = Variant::base;
  std::size_t n = 200;
  std::size_t m = 512;
  std::size_t depth = 1;  // hidden layers; 1 is the two-layer model
  std::size_t d = 256;
  double sigma = 10.0;
  double a = 1.0;
  double kappa_init = 1.0;
  double topk_eta = 1.0 / 6.0;
  double topk_c = 3.0;
  std::optional<std::size_t> k;
  std::optional<double> eta;  // default 0.9 / ||H0||_2
  std::size_t steps = 1000;
  std::size_t record_every = 0;  // 0: steps / 20 for `train`, none for `ablate`
  std::uint64_t seed = 7;
  TargetKind target = TargetKind::freq_mix;
  std::optional<std::string> image;  // PGM path; overrides target
  std::size_t grid_side = 64;
};

struct PeValidationConfig {
  std::vector<std::size_t> d_list{64, 256};
  std::vector<double> sigma_list{1.0, 5.0, 10.0};
  std::vector<double> delta_list{0.01, 0.05};
  std::size_t grid_side = 16;
  std::size_t mc_draws = 100000;
  std::size_t grid_draws = 40;
  std::uint64_t seed = 7;
};

struct DriftSweepConfig {
  Variant variant = Variant::hada;
  std::vector<std::size_t> widths{256, 1024, 4096};
  std::size_t seeds = 10;
  std::size_t n = 32;
  std::size_t d = 256;
  double sigma = 10.0;
  std::size_t steps = 200;
  std::size_t record_every = 50;
  std::size_t grid_side = 64;
  TargetKind target = TargetKind::freq_mix;
  std::optional<std::string> image;
  std::uint64_t seed = 7;
};

struct ConfigSet {
  std::vector<ExperimentConfig> experiments;
  std::optional<PeValidationConfig> pe_validation;
  std::optional<DriftSweepConfig> drift_sweep;
};

// Accepts a single experiment object, an array of them, or an object with
// "experiments", "pe_validation" and "drift_sweep" sections. Unknown keys and
// out-of-range values raise InvalidConfig naming the field; malformed JSON
// raises ParseError with the line number.
ConfigSet parse_config_text(const std::string& text);
ConfigSet parse_config(const std::string& path);

// Everything needed for one variant run. Random streams are derived from the
// seed by purpose, so all variants with the same seed see the same target,
// the same samples and the same encoder.
struct PreparedRun {
  ExperimentConfig config;
  Grid2D grid;
  TargetSignal target;
  std::vector<std::size_t> sample_index;
  std::optional<RffEncoder> encoder;
  EncodedDataset data;
  TwoLayerModel model;
  std::optional<MultiLayerModel> deep;  // depth > 1
};

PreparedRun prepare_run(const ExperimentConfig& cfg);
NtkGram initial_kernel(const PreparedRun& run);

struct NtkStatsRow {
  std::string config_id;
  std::uint64_t seed = 0;
  Variant variant = Variant::base;
  std::size_t n = 0, m = 0;
  SpectralStats stats;
  double s_bar = 0, p_bar = 0;
  double sum_tau_x = 0, sum_tau_s = 0, sum_tau_s_offdiag = 0, sum_tau_p = 0, sum_tau_q = 0;
  double proxy = 0;
  double identity_err_mean = 0, identity_err_second = 0;
  double kernel_gap_mean = 0, kernel_gap_second = 0;
  double op_norm = 0;
  std::string error;
};

NtkStatsRow compute_ntk_stats(const PreparedRun& run);

struct AblationRow {
  NtkStatsRow stats;
  double eta = 0;
  bool eta_clamped = false;
  std::size_t steps = 0;
  double final_psnr = 0;
  std::string error;
};

struct AblationOptions {
  std::optional<std::string> out_dir;  // reconstruction PGMs go here
  bool train = true;
};

// Rows in config order; a failing variant fills its error field only.
std::vector<AblationRow> run_ablation(const std::vector<ExperimentConfig>& configs, const AblationOptions& opt = {});
std::vector<NtkStatsRow> run_ntk_stats(const std::vector<ExperimentConfig>& configs);

struct TrainResult {
  std::string config_id;
  std::uint64_t seed = 0;
  double eta = 0;
  bool eta_clamped = false;
  TrainTrace trace;
  std::string error;
};
TrainResult run_training(const ExperimentConfig& cfg, std::size_t record_every, bool track_frozen = true);

struct PeRow {
  std::string quantity;  // kappa, second_moment, avg_offdiag_tau, raw_avg_offdiag_tau
  std::size_t d = 0;
  double sigma = 0;
  std::optional<double> delta_norm;
  double closed_form = 0;
  double mc_mean = 0, mc_stderr = 0, z_score = 0;
};
std::vector<PeRow> run_pe_validation(const PeValidationConfig& cfg);

struct DriftRow {
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double sup_eps = 0, sup_eps_zero_init = 0, sup_drift = 0, final_drift = 0;
  std::string error;
};
std::vector<DriftRow> run_drift_sweep(const DriftSweepConfig& cfg);

// CSV writers: '.' decimal, 6 significant digits (%.5e), LF line endings, config_id and seed on every row.
std::string format_real(double v);
std::string ntk_stats_csv(const std::vector<NtkStatsRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string train_csv(const TrainResult& r);
std::string pe_csv(const std::vector<PeRow>& rows, const std::string& config_id, std::uint64_t seed);
std::string drift_csv(const std::vector<DriftRow>& rows, const std::string& config_id);
std::string spectra_csv(const std::vector<NtkStatsRow>& rows);

}  // namespace ntks
