#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ntks/linalg.hpp"

namespace ntks {

enum class Mode { baseline, hadamard };
// identity is a diagnostic: with it the baseline model is linear in W.
enum class Activation { relu, identity };

struct Normalization {
  enum class Kind { none, sp, topk };
  Kind kind = Kind::none;
  std::size_t k = 0;  // topk only

  static Normalization none() { return {}; }
  static Normalization sp() { return {Kind::sp, 0}; }
  static Normalization topk(std::size_t k) { return {Kind::topk, k}; }
  bool normalized() const { return kind != Kind::none; }
};

// p(x) = tanh(A x + b), one factor per neuron.
struct ModulationMap {
  Matrix A;
  Vector b;
  bool frozen = true;

  Vector eval(std::span<const double> x) const;
};

ModulationMap make_modulation(Rng& rng, std::size_t m, std::size_t d, double std = 1.0, bool frozen = true);

// f(x) = (1/sqrt(m)) sum_r a_r p_r(x) phi_r(W x), where phi is the activation
// followed by the normalization. Baseline mode has no modulation and no
// normalization.
struct TwoLayerModel {
  Mode mode = Mode::baseline;
  Activation activation = Activation::relu;
  Normalization norm;
  Matrix W;  // m x d
  Vector a;  // +-a_scale
  double a_scale = 1.0;
  double init_std = 1.0;
  std::optional<ModulationMap> modulation;

  std::size_t width() const { return W.rows(); }
  std::size_t input_dim() const { return W.cols(); }
};

struct TwoLayerSpec {
  Mode mode = Mode::baseline;
  std::size_t m = 512;
  std::size_t d = 256;
  Normalization norm;
  bool modulated = false;
  double a = 1.0;
  double init_std = 1.0;
  Activation activation = Activation::relu;
};

// Draw order: W, then the readout signs, then the modulation.
TwoLayerModel make_two_layer(Rng& rng, const TwoLayerSpec& spec);

// Per-sample quantities of the hidden layer. For normalized models s, p and
// t = s*p are the per-neuron factors of the first-layer kernel; for the
// others s is the gate vector.
struct HiddenState {
  Vector preacts;
  std::vector<std::uint8_t> gates;  // 1{g >= 0} (relu) or all ones (identity)
  std::vector<std::uint8_t> mask;   // selected neurons; all ones unless topk
  Vector sigma;                     // activation output
  Vector h;                         // normalized features (sigma when unnormalized)
  double energy = 0.0;              // S, over the mask
  Vector beta;                      // 1 - sigma^2/S on the mask (1 when unnormalized)
  Vector s, p, t;
};

HiddenState hidden_state(const TwoLayerModel& model, std::span<const double> x);
// Same, from precomputed preactivations W x and modulation p(x).
HiddenState hidden_state_from_preacts(const TwoLayerModel& model, Vector preacts, Vector p);

double baseline_forward(const TwoLayerModel& model, std::span<const double> x);
Matrix baseline_gradient(const TwoLayerModel& model, std::span<const double> x);
double hadamard_forward(const TwoLayerModel& model, std::span<const double> x);
// Exact derivative, including the coupling through the shared normalizer.
Matrix hadamard_gradient(const TwoLayerModel& model, std::span<const double> x);
// Per-neuron form that keeps only the diagonal of that coupling (row r scaled
// by beta_r); equals the exact gradient when the model is unnormalized.
Matrix hadamard_gradient_beta(const TwoLayerModel& model, std::span<const double> x);

// Mode dispatch.
double forward(const TwoLayerModel& model, std::span<const double> x);
// Gradients with respect to W are rank one: row r = coef_r * x.
Vector gradient_coefficients(const TwoLayerModel& model, const HiddenState& hs);
Vector beta_gradient_coefficients(const TwoLayerModel& model, const HiddenState& hs);
double forward_from_state(const TwoLayerModel& model, const HiddenState& hs);

Vector sp_normalize(std::span<const double> v);
struct TopkResult {
  Vector values;
  std::vector<std::uint8_t> mask;
};
// Keeps the k entries of largest magnitude (ties go to the lower index) and
// normalizes the kept entries to unit norm.
TopkResult topk_sp_normalize(std::span<const double> v, std::size_t k);
std::vector<std::uint8_t> topk_mask(std::span<const double> v, std::size_t k);
std::vector<std::uint8_t> uniform_k_mask(Rng& rng, std::size_t m, std::size_t k);
// max(floor(eta m), ceil(c ln m)) clamped to [1, m]; eta in [1/6, 1), c in [2, 4].
std::size_t choose_k(std::size_t m, double eta = 1.0 / 6.0, double c = 3.0);

// ---- deep variant ----

struct Layer {
  Matrix W;
  Normalization norm;
  std::optional<ModulationMap> modulation;  // maps the network input to R^{m_l}
};

// y_0 = x; y_l = p_l(x) * normalize(relu(W_l y_{l-1})); f = readout . y_L.
struct MultiLayerModel {
  std::vector<Layer> layers;
  Vector readout;
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return layers.front().W.cols(); }
};

struct MultiLayerSpec {
  std::size_t input_dim = 2;
  std::size_t width = 16;
  std::size_t depth = 2;
  Normalization norm;
  bool modulated = false;
  bool modulation_frozen = true;
  double init_std = 1.0;
  double readout_scale = 1.0;
};

// Layer 1 uses init_std, deeper layers init_std / sqrt(fan_in); the readout is
// readout_scale / sqrt(width) with random signs.
MultiLayerModel make_multilayer(Rng& rng, const MultiLayerSpec& spec);
// The two-layer model as a depth-1 network (readout a_r / sqrt(m)).
MultiLayerModel to_multilayer(const TwoLayerModel& model);

double multilayer_forward(const MultiLayerModel& model, std::span<const double> x);

struct MultiLayerGradient {
  std::vector<Matrix> dW;
  Vector dreadout;
  std::vector<Matrix> dA;  // empty matrix for frozen or absent modulation
  std::vector<Vector> db;
};

MultiLayerGradient multilayer_backprop(const MultiLayerModel& model, std::span<const double> x,
                                       double upstream = 1.0);

// Smallest |preactivation| over all layers, and the smallest gap between the
// k-th and (k+1)-th largest entries for topk layers. Used to keep finite
// differences away from kinks.
struct KinkMargins {
  double min_abs_preact = 0.0;
  double min_topk_gap = 0.0;
};
KinkMargins kink_margins(const MultiLayerModel& model, std::span<const double> x);

enum class ParameterScope { first_layer, all };

// Flat parameter order: W_1..W_L (row-major), readout, then A_l, b_l for
// every unfrozen modulation. first_layer stops after W_1.
Vector flatten_parameters(const MultiLayerModel& model, ParameterScope scope);
void set_parameters(MultiLayerModel& model, ParameterScope scope, std::span<const double> flat);
Vector flatten_gradient(const MultiLayerModel& model, const MultiLayerGradient& g, ParameterScope scope);

// ---- checkpoints ----
// Layout (all little-endian):
//   "NTKS1" | u32 mode (0 baseline, 1 hadamard, 2 multilayer) | u64 m | u64 d |
//   u64 L | u32 activation | u32 norm kind | u64 k | u32 modulated |
//   u32 modulation frozen | f64 a_scale | f64 init_std
// followed by f64 blocks: for each layer W_l (row-major), then the readout,
// then for each modulated layer A_l and b_l. All hidden layers have width m.
std::string checkpoint_bytes(const TwoLayerModel& model);
std::string checkpoint_bytes(const MultiLayerModel& model);
TwoLayerModel two_layer_from_checkpoint(const std::string& bytes);
MultiLayerModel multilayer_from_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const TwoLayerModel& model);
TwoLayerModel load_checkpoint(const std::string& path);

}  // namespace ntks
