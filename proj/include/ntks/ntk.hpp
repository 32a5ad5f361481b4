#pragma once

#include <cstddef>
#include <vector>

#include "ntks/encoding.hpp"
#include "ntks/linalg.hpp"
#include "ntks/models.hpp"

namespace ntks {

enum class Provenance { analytic_baseline, analytic_hadamard, analytic_beta, jacobian_gram };
const char* to_string(Provenance p);

struct NtkGram {
  SymMatrix matrix;
  Provenance provenance = Provenance::analytic_baseline;
};

std::vector<HiddenState> hidden_states(const TwoLayerModel& model, const EncodedDataset& data);

// (a^2/m) rho_ij * #{r : both gates open}.
NtkGram assemble_baseline_ntk(const TwoLayerModel& model, const EncodedDataset& data);
// Gram of the exact first-layer gradients of the hadamard model.
NtkGram assemble_hadamard_ntk(const TwoLayerModel& model, const EncodedDataset& data);
// (a^2/m) rho_ij <t_i, t_j> with t = s*p and s = I*beta/sqrt(S). unit_beta
// replaces beta by 1 (diagnostic).
NtkGram assemble_beta_kernel(const TwoLayerModel& model, const EncodedDataset& data, bool unit_beta = false);
// Exact kernel for either mode.
NtkGram assemble_ntk(const TwoLayerModel& model, const EncodedDataset& data);
// Gram of flattened parameter gradients from backprop.
NtkGram jacobian_gram(const MultiLayerModel& model, const Matrix& inputs, ParameterScope scope = ParameterScope::all);

// literal: tau_p and ||p||^2 computed from the p vectors as they are (p = 1
// when there is no modulation). absent_is_unity: an absent modulation factor
// contributes tau_p = 1 and ||p||^2 = 1, so P_bar = 1 and sum tau_p = n^2.
enum class FactorConvention { literal, absent_is_unity };

struct SimilarityBundle {
  std::size_t n = 0, m = 0;
  double a = 1.0;
  bool modulated = false;
  FactorConvention convention = FactorConvention::absent_is_unity;
  Matrix tau_x, tau_s, tau_p, tau_q, kappa;
  Vector rho_diag, s_energy, p_energy;
  double rx2 = 0.0;  // mean rho_ii
  double s_bar = 0.0, p_bar = 0.0;
  double sum_tau_x = 0.0, sum_tau_s = 0.0, sum_tau_s_offdiag = 0.0, sum_tau_p = 0.0, sum_tau_q = 0.0;
};

// Gate vectors for baseline models, I*beta/sqrt(S) for hadamard models.
// tau_q = 0 where s_i*s_j or p_i*p_j vanishes.
SimilarityBundle similarity_bundle(const TwoLayerModel& model, const EncodedDataset& data,
                                   FactorConvention convention = FactorConvention::absent_is_unity);

struct SpectralStats {
  double mu = 0.0;
  double second_moment = 0.0;
  double v = 0.0;
  double diag_var = 0.0;  // Var_i(H_ii)
  Vector eigenvalues;
};

SpectralStats spectral_stats(const NtkGram& h, bool with_eigenvalues = true);

struct IdentityReport {
  double similarity_form = 0.0;  // four-factor expression
  double direct = 0.0;           // Tr(H)/n or Tr(H^2)/n of the factor kernel
  double rel_err = 0.0;
  double exact_ntk_value = 0.0;  // same statistic of the exact NTK
  double kernel_gap = 0.0;       // |direct - exact| / |exact|
};

IdentityReport verify_mean_identity(const TwoLayerModel& model, const EncodedDataset& data);
IdentityReport verify_second_moment_identity(const TwoLayerModel& model, const EncodedDataset& data);

double variance_proxy_baseline(const SimilarityBundle& b, double a, std::size_t m, std::size_t n);
double variance_proxy_hadamard(const SimilarityBundle& b, double a, std::size_t m, std::size_t n);

enum class TauFamily { x, s, p, q };
struct ProbeResult {
  double before = 0.0, after = 0.0;
};
// Scales the off-diagonal entries of one family and recomputes the four-factor proxy.
ProbeResult monotonicity_probe(const SimilarityBundle& b, TauFamily family, double scale);

struct EnergyWeighted {
  Matrix M;       // tau_s * S_bar^2
  Matrix tau_s;   // on the normalized (masked) vectors
  double s_bar = 0.0;  // mean of (1/m) sum_r y_r^2 mask_r
};

// rows of hidden are pre-normalization vectors y_i; scheme is sp or topk.
EnergyWeighted energy_weighted_similarity(const Matrix& hidden, const Normalization& scheme);
// Random support of size k per row, independent of the values.
Matrix uniform_k_similarity(const Matrix& hidden, std::size_t k, Rng& rng);
double mean_offdiag(const Matrix& a);

}  // namespace ntks
