#include "ntks/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>

#include "ntks/parallel.hpp"

namespace ntks {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum Stream : std::uint64_t { kTarget = 1, kSamples = 2, kEncoder = 3, kModel = 4 };

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::base: return "base";
    case Variant::base_norm: return "base_norm";
    case Variant::rff_pe_enc: return "rff_pe_enc";
    case Variant::rff_pe_enc_norm: return "rff_pe_enc_norm";
    case Variant::rff_pe_enc_topk: return "rff_pe_enc_topk";
    case Variant::hada_nonorm: return "hada_nonorm";
    case Variant::hada: return "hada";
    case Variant::hada_topk: return "hada_topk";
  }
  return "unknown";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::base, Variant::base_norm, Variant::rff_pe_enc, Variant::rff_pe_enc_norm,
                                      Variant::rff_pe_enc_topk, Variant::hada_nonorm, Variant::hada, Variant::hada_topk};
  return v;
}

std::optional<Variant> parse_variant(const std::string& s) {
  for (Variant v : all_variants())
    if (s == to_string(v)) return v;
  return std::nullopt;
}

VariantTraits traits(Variant v) {
  using K = Normalization::Kind;
  switch (v) {
    case Variant::base: return {false, Mode::baseline, K::none, false};
    case Variant::base_norm: return {false, Mode::hadamard, K::sp, false};
    case Variant::rff_pe_enc: return {true, Mode::baseline, K::none, false};
    case Variant::rff_pe_enc_norm: return {true, Mode::hadamard, K::sp, false};
    case Variant::rff_pe_enc_topk: return {true, Mode::hadamard, K::topk, false};
    case Variant::hada_nonorm: return {true, Mode::hadamard, K::none, true};
    case Variant::hada: return {true, Mode::hadamard, K::sp, true};
    case Variant::hada_topk: return {true, Mode::hadamard, K::topk, true};
  }
  return {};
}

PreparedRun prepare_run(const ExperimentConfig& cfg) {
  PreparedRun run;
  run.config = cfg;
  const Rng root(cfg.seed);
  if (cfg.image) {
    run.target = load_pgm(*cfg.image);
    run.grid = make_grid(run.target.side);
  } else {
    run.grid = make_grid(cfg.grid_side);
    Rng r = root.split(kTarget);
    run.target = synth_target(run.grid, cfg.target, r);
  }

  // The origin is never sampled: its raw coordinates have zero norm.
  const std::size_t total = run.grid.points.size();
  if (total < 2 || cfg.n > total - 1)
    throw Error(ErrorKind::InvalidConfig, "n: exceeds the number of usable grid points");
  std::vector<std::size_t> pool(total - 1);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
  Rng rs = root.split(kSamples);
  for (std::size_t i = 0; i < cfg.n; ++i) std::swap(pool[i], pool[i + rs.below(pool.size() - i)]);
  run.sample_index.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cfg.n));

  std::vector<Point2> pts;
  Vector ys;
  for (std::size_t idx : run.sample_index) {
    pts.push_back(run.grid.points[idx]);
    ys.push_back(run.target.values[idx]);
  }

  const VariantTraits tr = traits(cfg.variant);
  if (tr.encoded) {
    Rng re = root.split(kEncoder);
    run.encoder = make_rff_encoder(re, 2, cfg.d, cfg.sigma);
  }
  run.data = build_dataset(pts, ys, run.encoder ? &*run.encoder : nullptr);

  Normalization norm;
  if (tr.norm == Normalization::Kind::sp) norm = Normalization::sp();
  if (tr.norm == Normalization::Kind::topk) norm = Normalization::topk(cfg.k ? *cfg.k : choose_k(cfg.m, cfg.topk_eta, cfg.topk_c));

  Rng rm = root.split(kModel);
  if (cfg.depth == 1) {
    TwoLayerSpec spec;
    spec.mode = tr.mode;
    spec.m = cfg.m;
    spec.d = run.data.dim();
    spec.norm = norm;
    spec.modulated = tr.modulated;
    spec.a = cfg.a;
    spec.init_std = cfg.kappa_init;
    run.model = make_two_layer(rm, spec);
  } else {
    MultiLayerSpec spec;
    spec.input_dim = run.data.dim();
    spec.width = cfg.m;
    spec.depth = cfg.depth;
    spec.norm = norm;
    spec.modulated = tr.modulated;
    spec.init_std = cfg.kappa_init;
    spec.readout_scale = cfg.a;
    run.deep = make_multilayer(rm, spec);
  }
  return run;
}

NtkGram initial_kernel(const PreparedRun& run) {
  if (run.deep) return jacobian_gram(*run.deep, run.data.inputs, ParameterScope::all);
  return assemble_ntk(run.model, run.data);
}

NtkStatsRow compute_ntk_stats(const PreparedRun& run) {
  const ExperimentConfig& cfg = run.config;
  NtkStatsRow row;
  row.config_id = cfg.config_id;
  row.seed = cfg.seed;
  row.variant = cfg.variant;
  row.n = cfg.n;
  row.m = cfg.m;
  const NtkGram h0 = initial_kernel(run);
  row.stats = spectral_stats(h0);
  row.op_norm = std::max(std::abs(row.stats.eigenvalues.front()), std::abs(row.stats.eigenvalues.back()));
  if (run.deep) {
    // The similarity factorization is defined for the two-layer model only.
    row.s_bar = row.p_bar = row.sum_tau_x = row.sum_tau_s = row.sum_tau_s_offdiag = row.sum_tau_p = row.sum_tau_q = kNaN;
    row.proxy = row.identity_err_mean = row.identity_err_second = row.kernel_gap_mean = row.kernel_gap_second = kNaN;
    return row;
  }
  const SimilarityBundle b = similarity_bundle(run.model, run.data);
  row.s_bar = b.s_bar;
  row.p_bar = b.p_bar;
  row.sum_tau_x = b.sum_tau_x;
  row.sum_tau_s = b.sum_tau_s;
  row.sum_tau_s_offdiag = b.sum_tau_s_offdiag;
  row.sum_tau_p = b.sum_tau_p;
  row.sum_tau_q = b.sum_tau_q;
  row.proxy = run.model.mode == Mode::baseline ? variance_proxy_baseline(b, cfg.a, cfg.m, cfg.n)
                                               : variance_proxy_hadamard(b, cfg.a, cfg.m, cfg.n);
  const IdentityReport im = verify_mean_identity(run.model, run.data);
  const IdentityReport is = verify_second_moment_identity(run.model, run.data);
  row.identity_err_mean = im.rel_err;
  row.identity_err_second = is.rel_err;
  row.kernel_gap_mean = im.kernel_gap;
  row.kernel_gap_second = is.kernel_gap;
  return row;
}

namespace {

struct StepChoice {
  double eta = 0;
  bool clamped = false;
};

StepChoice choose_eta(const ExperimentConfig& cfg, double op_norm) {
  if (!(op_norm > 0.0)) throw Error(ErrorKind::DegenerateKernel, "||H0||_2 is zero");
  const double bound = 1.0 / op_norm;
  if (!cfg.eta) return {0.9 * bound, false};
  if (*cfg.eta > bound) {
    std::cerr << "warning: " << cfg.config_id << ": eta " << *cfg.eta << " exceeds 1/||H0||_2 = " << bound
              << ", clamped\n";
    return {bound, true};
  }
  return {*cfg.eta, false};
}

Vector predict_grid(const PreparedRun& run) {
  const auto& pts = run.grid.points;
  Matrix inputs(pts.size(), run.data.dim());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (run.encoder) {
      const Vector e = run.encoder->encode(pts[i]);
      std::copy(e.begin(), e.end(), inputs.row(i).begin());
    } else {
      inputs(i, 0) = pts[i][0];
      inputs(i, 1) = pts[i][1];
    }
  }
  if (!run.deep) return predict(run.model, inputs);
  Vector u(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) { u[i] = multilayer_forward(*run.deep, inputs.row(i)); });
  return u;
}

TrainTrace train_prepared(PreparedRun& run, const TrainOptions& opt) {
  return run.deep ? train_finite_width(*run.deep, run.data, opt) : train_finite_width(run.model, run.data, opt);
}

std::string error_text(const std::exception& e) { return e.what(); }

}  // namespace

std::vector<NtkStatsRow> run_ntk_stats(const std::vector<ExperimentConfig>& configs) {
  std::vector<NtkStatsRow> rows(configs.size());
  parallel_for(configs.size(), [&](std::size_t i) {
    try {
      rows[i] = compute_ntk_stats(prepare_run(configs[i]));
    } catch (const std::exception& e) {
      rows[i].config_id = configs[i].config_id;
      rows[i].seed = configs[i].seed;
      rows[i].variant = configs[i].variant;
      rows[i].n = configs[i].n;
      rows[i].m = configs[i].m;
      rows[i].error = error_text(e);
    }
  });
  return rows;
}

std::vector<AblationRow> run_ablation(const std::vector<ExperimentConfig>& configs, const AblationOptions& opt) {
  std::vector<AblationRow> rows(configs.size());
  parallel_for(configs.size(), [&](std::size_t i) {
    const ExperimentConfig& cfg = configs[i];
    AblationRow& row = rows[i];
    row.stats.config_id = cfg.config_id;
    row.stats.seed = cfg.seed;
    row.stats.variant = cfg.variant;
    row.stats.n = cfg.n;
    row.stats.m = cfg.m;
    row.steps = cfg.steps;
    row.final_psnr = kNaN;
    try {
      PreparedRun run = prepare_run(cfg);
      row.stats = compute_ntk_stats(run);
      const StepChoice sc = choose_eta(cfg, row.stats.op_norm);
      row.eta = sc.eta;
      row.eta_clamped = sc.clamped;
      if (opt.train) {
        TrainOptions to;
        to.eta = sc.eta;
        to.steps = cfg.steps;
        to.record_every = cfg.record_every;
        to.track_frozen = false;
        const TrainTrace tr = train_prepared(run, to);
        row.final_psnr = tr.steps.back().psnr;
        if (opt.out_dir) {
          TargetSignal recon{run.grid.side, predict_grid(run)};
          write_pgm((std::filesystem::path(*opt.out_dir) / (cfg.config_id + "_recon.pgm")).string(), recon);
        }
      }
    } catch (const std::exception& e) {
      row.error = error_text(e);
    }
  });
  return rows;
}

TrainResult run_training(const ExperimentConfig& cfg, std::size_t record_every, bool track_frozen) {
  TrainResult res;
  res.config_id = cfg.config_id;
  res.seed = cfg.seed;
  try {
    PreparedRun run = prepare_run(cfg);
    const NtkGram h0 = initial_kernel(run);
    const StepChoice sc = choose_eta(cfg, operator_norm(h0.matrix));
    res.eta = sc.eta;
    res.eta_clamped = sc.clamped;
    TrainOptions to;
    to.eta = sc.eta;
    to.steps = cfg.steps;
    to.record_every = record_every;
    to.track_frozen = track_frozen;
    res.trace = train_prepared(run, to);
  } catch (const std::exception& e) {
    res.error = error_text(e);
  }
  return res;
}

std::vector<PeRow> run_pe_validation(const PeValidationConfig& cfg) {
  struct Job {
    std::string quantity;
    std::size_t d;
    double sigma;
    std::optional<double> delta;
  };
  std::vector<Job> jobs;
  for (std::size_t d : cfg.d_list)
    for (double s : cfg.sigma_list)
      for (double dl : cfg.delta_list) {
        jobs.push_back({"kappa", d, s, dl});
        jobs.push_back({"second_moment", d, s, dl});
      }
  for (std::size_t d : cfg.d_list)
    for (double s : cfg.sigma_list) jobs.push_back({"avg_offdiag_tau", d, s, std::nullopt});

  const Grid2D grid = make_grid(cfg.grid_side);
  std::vector<PeRow> rows(jobs.size());
  const Rng root(cfg.seed);
  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& j = jobs[i];
    Rng rng = root.split(i);
    PeRow& r = rows[i];
    r.quantity = j.quantity;
    r.d = j.d;
    r.sigma = j.sigma;
    r.delta_norm = j.delta;
    McEstimate mc;
    if (j.quantity == "kappa") {
      r.closed_form = kappa(j.sigma, *j.delta);
      mc = mc_kappa(rng, j.sigma, *j.delta, cfg.mc_draws);
    } else if (j.quantity == "second_moment") {
      r.closed_form = second_moment(j.d, j.sigma, *j.delta);
      mc = mc_second_moment(rng, j.d, j.sigma, *j.delta, cfg.mc_draws);
    } else {
      r.closed_form = avg_offdiag_tau(grid, j.d, j.sigma);
      mc = mc_avg_offdiag_tau(rng, grid, j.d, j.sigma, cfg.grid_draws);
    }
    r.mc_mean = mc.mean;
    r.mc_stderr = mc.std_error;
    const double diff = mc.mean - r.closed_form;
    r.z_score = mc.std_error > 0.0 ? diff / mc.std_error : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
  });

  PeRow raw;
  raw.quantity = "raw_avg_offdiag_tau";
  raw.closed_form = raw.mc_mean = raw_avg_offdiag_tau(grid);
  raw.mc_stderr = raw.z_score = 0.0;
  rows.push_back(raw);
  return rows;
}

std::vector<DriftRow> run_drift_sweep(const DriftSweepConfig& cfg) {
  const std::size_t jobs = cfg.widths.size() * cfg.seeds;
  std::vector<DriftRow> rows(jobs);
  parallel_for(jobs, [&](std::size_t j) {
    const std::size_t wi = j / cfg.seeds, si = j % cfg.seeds;
    ExperimentConfig ec;
    ec.config_id = "drift";
    ec.variant = cfg.variant;
    ec.n = cfg.n;
    ec.m = cfg.widths[wi];
    ec.d = cfg.d;
    ec.sigma = cfg.sigma;
    ec.steps = cfg.steps;
    ec.seed = cfg.seed + si;
    ec.target = cfg.target;
    ec.image = cfg.image;
    ec.grid_side = cfg.grid_side;
    DriftRow& row = rows[j];
    row.m = ec.m;
    row.seed = ec.seed;
    const TrainResult tr = run_training(ec, cfg.record_every, true);
    row.error = tr.error;
    if (tr.error.empty()) {
      row.sup_eps = tr.trace.sup_eps();
      row.sup_eps_zero_init = tr.trace.sup_eps_zero_init();
      row.sup_drift = tr.trace.sup_drift();
      row.final_drift = tr.trace.steps.back().h_drift_opnorm;
    } else {
      row.sup_eps = row.sup_eps_zero_init = row.sup_drift = row.final_drift = kNaN;
    }
  });
  return rows;
}

}  // namespace ntks
