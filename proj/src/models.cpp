#include "ntks/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ntks {

Vector ModulationMap::eval(std::span<const double> x) const {
  if (x.size() != A.cols()) throw Error(ErrorKind::InvalidInput, "modulation: input dimension mismatch");
  Vector p(A.rows());
  for (std::size_t r = 0; r < A.rows(); ++r) p[r] = std::tanh(dot(A.row(r), x) + b[r]);
  return p;
}

ModulationMap make_modulation(Rng& rng, std::size_t m, std::size_t d, double std, bool frozen) {
  ModulationMap mm;
  mm.A = gaussian_matrix(rng, m, d, std);
  mm.b = gaussian_vector(rng, m, std);
  mm.frozen = frozen;
  return mm;
}

TwoLayerModel make_two_layer(Rng& rng, const TwoLayerSpec& spec) {
  if (spec.m == 0 || spec.d == 0) throw Error(ErrorKind::InvalidInput, "two-layer model: m and d must be >= 1");
  if (!(spec.a > 0.0)) throw Error(ErrorKind::InvalidInput, "two-layer model: a must be > 0");
  if (spec.mode == Mode::baseline && (spec.norm.normalized() || spec.modulated))
    throw Error(ErrorKind::InvalidInput, "baseline mode has no normalization or modulation");
  if (spec.norm.kind == Normalization::Kind::topk && (spec.norm.k == 0 || spec.norm.k > spec.m))
    throw Error(ErrorKind::InvalidInput, "topk: k must be in [1, m]");
  TwoLayerModel model;
  model.mode = spec.mode;
  model.activation = spec.activation;
  model.norm = spec.norm;
  model.a_scale = spec.a;
  model.init_std = spec.init_std;
  model.W = gaussian_matrix(rng, spec.m, spec.d, spec.init_std);
  model.a.resize(spec.m);
  for (auto& v : model.a) v = (rng.next_u64() >> 63) ? spec.a : -spec.a;
  if (spec.modulated) model.modulation = make_modulation(rng, spec.m, spec.d);
  return model;
}

std::vector<std::uint8_t> topk_mask(std::span<const double> v, std::size_t k) {
  const std::size_t m = v.size();
  if (k == 0 || k > m) throw Error(ErrorKind::InvalidInput, "topk: k must be in [1, m]");
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(),
                   [&](std::size_t i, std::size_t j) {
                     const double ai = std::abs(v[i]), aj = std::abs(v[j]);
                     return ai > aj || (ai == aj && i < j);
                   });
  std::vector<std::uint8_t> mask(m, 0);
  for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1;
  return mask;
}

Vector sp_normalize(std::span<const double> v) {
  const double n = norm(v);
  if (n * n < 1e-24) throw Error(ErrorKind::DegenerateEnergy, "sp_normalize: zero energy");
  Vector out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

TopkResult topk_sp_normalize(std::span<const double> v, std::size_t k) {
  TopkResult r;
  r.mask = topk_mask(v, k);
  r.values.assign(v.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (r.mask[i]) s += v[i] * v[i];
  if (s < 1e-24) throw Error(ErrorKind::DegenerateEnergy, "topk_sp_normalize: zero energy");
  const double inv = 1.0 / std::sqrt(s);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (r.mask[i]) r.values[i] = v[i] * inv;
  return r;
}

std::vector<std::uint8_t> uniform_k_mask(Rng& rng, std::size_t m, std::size_t k) {
  if (k == 0 || k > m) throw Error(ErrorKind::InvalidInput, "uniform_k_mask: k must be in [1, m]");
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(m - i)]);
  std::vector<std::uint8_t> mask(m, 0);
  for (std::size_t i = 0; i < k; ++i) mask[idx[i]] = 1;
  return mask;
}

std::size_t choose_k(std::size_t m, double eta, double c) {
  if (m == 0) throw Error(ErrorKind::InvalidInput, "choose_k: m must be >= 1");
  if (!(eta >= 1.0 / 6.0 - 1e-12 && eta < 1.0)) throw Error(ErrorKind::InvalidInput, "choose_k: eta must be in [1/6, 1)");
  if (!(c >= 2.0 && c <= 4.0)) throw Error(ErrorKind::InvalidInput, "choose_k: c must be in [2, 4]");
  const double md = static_cast<double>(m);
  // The small slack keeps floor(m/6) exact when eta is the rounded 1/6.
  const auto lin = static_cast<std::size_t>(std::floor(eta * md + 1e-9));
  const auto log = static_cast<std::size_t>(std::ceil(c * std::log(md) - 1e-12));
  return std::clamp<std::size_t>(std::max(lin, log), 1, m);
}

HiddenState hidden_state(const TwoLayerModel& model, std::span<const double> x) {
  Vector p = model.modulation ? model.modulation->eval(x) : Vector(model.width(), 1.0);
  return hidden_state_from_preacts(model, matvec(model.W, x), std::move(p));
}

HiddenState hidden_state_from_preacts(const TwoLayerModel& model, Vector preacts, Vector p) {
  const std::size_t m = model.width();
  if (preacts.size() != m || p.size() != m) throw Error(ErrorKind::InvalidInput, "hidden state: width mismatch");
  HiddenState hs;
  hs.preacts = std::move(preacts);
  hs.gates.resize(m);
  hs.sigma.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double g = hs.preacts[r];
    if (model.activation == Activation::relu) {
      hs.gates[r] = g >= 0.0 ? 1 : 0;
      hs.sigma[r] = g > 0.0 ? g : 0.0;
    } else {
      hs.gates[r] = 1;
      hs.sigma[r] = g;
    }
  }
  hs.mask = model.norm.kind == Normalization::Kind::topk ? topk_mask(hs.sigma, model.norm.k)
                                                         : std::vector<std::uint8_t>(m, 1);
  double energy = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    if (hs.mask[r]) energy += hs.sigma[r] * hs.sigma[r];
  hs.energy = energy;

  hs.p = std::move(p);
  hs.beta.assign(m, 1.0);
  hs.s.resize(m);
  hs.h.resize(m);
  const bool normalized = model.mode == Mode::hadamard && model.norm.normalized();
  if (normalized) {
    if (energy < 1e-24) throw Error(ErrorKind::DegenerateEnergy, "hidden energy below 1e-24");
    const double inv = 1.0 / std::sqrt(energy);
    for (std::size_t r = 0; r < m; ++r) {
      if (hs.mask[r]) {
        hs.beta[r] = 1.0 - hs.sigma[r] * hs.sigma[r] / energy;
        hs.h[r] = hs.sigma[r] * inv;
      } else {
        hs.h[r] = 0.0;
      }
      hs.s[r] = hs.mask[r] && hs.gates[r] ? hs.beta[r] * inv : 0.0;
    }
  } else {
    for (std::size_t r = 0; r < m; ++r) {
      hs.h[r] = hs.sigma[r];
      hs.s[r] = hs.gates[r];
    }
  }
  hs.t.resize(m);
  for (std::size_t r = 0; r < m; ++r) hs.t[r] = hs.s[r] * hs.p[r];
  return hs;
}

double forward_from_state(const TwoLayerModel& model, const HiddenState& hs) {
  const std::size_t m = model.width();
  double f = 0.0;
  for (std::size_t r = 0; r < m; ++r) f += model.a[r] * hs.p[r] * hs.h[r];
  return f / std::sqrt(static_cast<double>(m));
}

Vector gradient_coefficients(const TwoLayerModel& model, const HiddenState& hs) {
  const std::size_t m = model.width();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Vector coef(m);
  const bool normalized = model.mode == Mode::hadamard && model.norm.normalized();
  if (!normalized) {
    for (std::size_t r = 0; r < m; ++r) coef[r] = hs.gates[r] ? model.a[r] * hs.p[r] * inv_sqrt_m : 0.0;
    return coef;
  }
  double hc = 0.0;
  for (std::size_t r = 0; r < m; ++r) hc += hs.h[r] * model.a[r] * hs.p[r];
  const double scale = inv_sqrt_m / std::sqrt(hs.energy);
  for (std::size_t r = 0; r < m; ++r)
    coef[r] = hs.mask[r] && hs.gates[r] ? (model.a[r] * hs.p[r] - hs.h[r] * hc) * scale : 0.0;
  return coef;
}

Vector beta_gradient_coefficients(const TwoLayerModel& model, const HiddenState& hs) {
  const std::size_t m = model.width();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  Vector coef(m);
  for (std::size_t r = 0; r < m; ++r) coef[r] = model.a[r] * hs.t[r] * inv_sqrt_m;
  return coef;
}

namespace {

Matrix outer(const Vector& coef, std::span<const double> x) {
  Matrix g(coef.size(), x.size());
  for (std::size_t r = 0; r < coef.size(); ++r) {
    auto row = g.row(r);
    for (std::size_t j = 0; j < x.size(); ++j) row[j] = coef[r] * x[j];
  }
  return g;
}

void require_mode(const TwoLayerModel& model, Mode mode, const char* fn) {
  if (model.mode != mode) throw Error(ErrorKind::InvalidInput, std::string(fn) + ": wrong model mode");
}

}  // namespace

double baseline_forward(const TwoLayerModel& model, std::span<const double> x) {
  require_mode(model, Mode::baseline, "baseline_forward");
  return forward_from_state(model, hidden_state(model, x));
}

Matrix baseline_gradient(const TwoLayerModel& model, std::span<const double> x) {
  require_mode(model, Mode::baseline, "baseline_gradient");
  return outer(gradient_coefficients(model, hidden_state(model, x)), x);
}

double hadamard_forward(const TwoLayerModel& model, std::span<const double> x) {
  require_mode(model, Mode::hadamard, "hadamard_forward");
  return forward_from_state(model, hidden_state(model, x));
}

Matrix hadamard_gradient(const TwoLayerModel& model, std::span<const double> x) {
  require_mode(model, Mode::hadamard, "hadamard_gradient");
  return outer(gradient_coefficients(model, hidden_state(model, x)), x);
}

Matrix hadamard_gradient_beta(const TwoLayerModel& model, std::span<const double> x) {
  require_mode(model, Mode::hadamard, "hadamard_gradient_beta");
  return outer(beta_gradient_coefficients(model, hidden_state(model, x)), x);
}

double forward(const TwoLayerModel& model, std::span<const double> x) {
  return forward_from_state(model, hidden_state(model, x));
}

}  // namespace ntks
