#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "ntks/encoding.hpp"
#include "ntks/linalg.hpp"
#include "ntks/models.hpp"
#include "ntks/ntk.hpp"

namespace ntks {

// Linear dynamics of the residual e = u - y under a fixed kernel.
struct FrozenKernelSystem {
  NtkGram h0;
  SpectralDecomposition decomposition;
  Vector u0, y;
  double eta = 0.0;

  // Requires 0 < eta <= 1/||h0||_2 (InvalidStepSize otherwise).
  static FrozenKernelSystem checked(NtkGram h0, Vector u0, Vector y, double eta);
  // Any eta >= 0; used for diagnostics.
  static FrozenKernelSystem unchecked(NtkGram h0, Vector u0, Vector y, double eta);

  Vector initial_error() const;
};

Vector flow_error(const FrozenKernelSystem& sys, double t);
Vector gd_spectral_error(const FrozenKernelSystem& sys, std::size_t k);
// (1 - eta lambda_min)^k ||e(0)||^2 with the measured lambda_min.
double gd_linear_rate_bound(const FrozenKernelSystem& sys, std::size_t k);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double psnr = 0.0;
  double eps_k = 0.0;            // ||u_net - u_ker||, shared u(0)
  double eps_k_zero_init = 0.0;  // same, frozen model started from u = 0
  bool recorded = false;         // drift fields below are filled
  double h_drift_opnorm = std::numeric_limits<double>::quiet_NaN();
  double max_w_drift = std::numeric_limits<double>::quiet_NaN();
};

struct TrainTrace {
  std::vector<StepRecord> steps;  // k = 0..n_steps
  std::size_t stability_violations = 0;
  Vector final_predictions;
  double sup_eps() const;
  double sup_eps_zero_init() const;
  double sup_drift() const;
};

struct TrainOptions {
  double eta = 0.0;
  std::size_t steps = 1000;
  std::size_t record_every = 0;  // 0: no drift records
  bool track_frozen = true;      // eps_k against the frozen kernel
};

// Full-batch gradient descent on 0.5 ||u - y||^2. The two-layer model trains
// W only; the multilayer model trains every W_l, the readout and any unfrozen
// modulation. Loss above 1e12 raises DivergenceDetected.
TrainTrace train_finite_width(TwoLayerModel& model, const EncodedDataset& data, const TrainOptions& opt);
TrainTrace train_finite_width(MultiLayerModel& model, const EncodedDataset& data, const TrainOptions& opt);

Vector predict(const TwoLayerModel& model, const Matrix& inputs);

struct WeylReport {
  double lambda_min_ref = 0.0;
  double lambda_min_h0 = 0.0;
  double gap_opnorm = 0.0;  // ||h0 - h_ref||_2
  bool weyl_holds = false;
  bool half_gap_holds = false;  // lambda_min(h0) >= lambda_min(h_ref) / 2
};

WeylReport weyl_gap_check(const NtkGram& h0, const NtkGram& h_ref);
// Entrywise mean; used as the reference kernel estimate.
NtkGram mean_kernel(const std::vector<NtkGram>& ks);

}  // namespace ntks
