#include "ntks/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ntks/parallel.hpp"

namespace ntks {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::analytic_baseline: return "analytic_baseline";
    case Provenance::analytic_hadamard: return "analytic_hadamard";
    case Provenance::analytic_beta: return "analytic_beta";
    case Provenance::jacobian_gram: return "jacobian_gram";
  }
  return "unknown";
}

namespace {

// Upper triangle of rows * rows^T, mirrored.
Matrix row_gram(const Matrix& rows) {
  const std::size_t n = rows.rows();
  Matrix g(n, n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) g(i, j) = dot(rows.row(i), rows.row(j));
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

SymMatrix kernel_from_coefficients(const Matrix& coef, const SymMatrix& rho) {
  Matrix g = row_gram(coef);
  const std::size_t n = g.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) *= rho(i, j);
  return SymMatrix(std::move(g));
}

template <typename F>
Matrix coefficient_rows(const std::vector<HiddenState>& hs, std::size_t m, F&& coef_of) {
  Matrix c(hs.size(), m);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const Vector v = coef_of(hs[i]);
    std::copy(v.begin(), v.end(), c.row(i).begin());
  }
  return c;
}

}  // namespace

std::vector<HiddenState> hidden_states(const TwoLayerModel& model, const EncodedDataset& data) {
  if (data.dim() != model.input_dim()) throw Error(ErrorKind::InvalidInput, "data/model dimension mismatch");
  std::vector<HiddenState> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) { out[i] = hidden_state(model, data.inputs.row(i)); });
  return out;
}

NtkGram assemble_baseline_ntk(const TwoLayerModel& model, const EncodedDataset& data) {
  if (model.mode != Mode::baseline) throw Error(ErrorKind::InvalidInput, "assemble_baseline_ntk: baseline model required");
  const auto hs = hidden_states(model, data);
  const std::size_t m = model.width();
  Matrix gates(hs.size(), m);
  for (std::size_t i = 0; i < hs.size(); ++i)
    for (std::size_t r = 0; r < m; ++r) gates(i, r) = hs[i].gates[r];
  SymMatrix k = kernel_from_coefficients(gates, data.rho);
  Matrix h = k.matrix();
  const double scale = model.a_scale * model.a_scale / static_cast<double>(m);
  for (auto& v : h.data()) v *= scale;
  return {SymMatrix(std::move(h)), Provenance::analytic_baseline};
}

NtkGram assemble_hadamard_ntk(const TwoLayerModel& model, const EncodedDataset& data) {
  if (model.mode != Mode::hadamard) throw Error(ErrorKind::InvalidInput, "assemble_hadamard_ntk: hadamard model required");
  const auto hs = hidden_states(model, data);
  const Matrix c = coefficient_rows(hs, model.width(), [&](const HiddenState& s) { return gradient_coefficients(model, s); });
  return {kernel_from_coefficients(c, data.rho), Provenance::analytic_hadamard};
}

NtkGram assemble_beta_kernel(const TwoLayerModel& model, const EncodedDataset& data, bool unit_beta) {
  auto hs = hidden_states(model, data);
  const bool normalized = model.mode == Mode::hadamard && model.norm.normalized();
  if (unit_beta && normalized) {
    for (auto& s : hs) {
      const double inv = 1.0 / std::sqrt(s.energy);
      for (std::size_t r = 0; r < s.s.size(); ++r) {
        s.s[r] = s.mask[r] && s.gates[r] ? inv : 0.0;
        s.t[r] = s.s[r] * s.p[r];
      }
    }
  }
  const Matrix c = coefficient_rows(hs, model.width(), [&](const HiddenState& s) { return beta_gradient_coefficients(model, s); });
  return {kernel_from_coefficients(c, data.rho), Provenance::analytic_beta};
}

NtkGram assemble_ntk(const TwoLayerModel& model, const EncodedDataset& data) {
  return model.mode == Mode::baseline ? assemble_baseline_ntk(model, data) : assemble_hadamard_ntk(model, data);
}

NtkGram jacobian_gram(const MultiLayerModel& model, const Matrix& inputs, ParameterScope scope) {
  const std::size_t n = inputs.rows();
  if (n > 512) throw Error(ErrorKind::InvalidInput, "jacobian_gram: n must be <= 512");
  std::vector<Vector> grads(n);
  parallel_for(n, [&](std::size_t i) {
    grads[i] = flatten_gradient(model, multilayer_backprop(model, inputs.row(i)), scope);
  });
  Matrix g(n, grads.empty() ? 0 : grads[0].size());
  for (std::size_t i = 0; i < n; ++i) std::copy(grads[i].begin(), grads[i].end(), g.row(i).begin());
  return {SymMatrix(row_gram(g)), Provenance::jacobian_gram};
}

SimilarityBundle similarity_bundle(const TwoLayerModel& model, const EncodedDataset& data, FactorConvention convention) {
  const auto hs = hidden_states(model, data);
  const std::size_t n = hs.size(), m = model.width();
  SimilarityBundle b;
  b.n = n;
  b.m = m;
  b.a = model.a_scale;
  b.modulated = model.modulation.has_value();
  b.convention = convention;

  Matrix s2(n, m), p2(n, m), t(n, m);
  b.rho_diag.resize(n);
  b.s_energy.resize(n);
  b.p_energy.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < m; ++r) {
      const double s = hs[i].s[r], p = hs[i].p[r];
      s2(i, r) = s * s;
      p2(i, r) = p * p;
      t(i, r) = s * p;
    }
    b.rho_diag[i] = data.rho(i, i);
    b.s_energy[i] = std::accumulate(s2.row(i).begin(), s2.row(i).end(), 0.0);
    b.p_energy[i] = std::accumulate(p2.row(i).begin(), p2.row(i).end(), 0.0);
  }
  const bool unity_p = convention == FactorConvention::absent_is_unity && !b.modulated;
  if (unity_p) std::fill(b.p_energy.begin(), b.p_energy.end(), 1.0);

  const Matrix ns = row_gram(s2), np = row_gram(p2), tt = row_gram(t);
  b.tau_x = Matrix(n, n);
  b.tau_s = Matrix(n, n);
  b.tau_p = Matrix(n, n);
  b.tau_q = Matrix(n, n);
  b.kappa = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double rr = data.rho(i, j);
      const double dx = b.rho_diag[i] * b.rho_diag[j];
      if (dx == 0.0) throw Error(ErrorKind::DegenerateInput, "similarity_bundle: zero-norm input");
      b.tau_x(i, j) = rr * rr / dx;
      const double ds = b.s_energy[i] * b.s_energy[j];
      b.tau_s(i, j) = ds > 0.0 ? ns(i, j) / ds : 0.0;
      if (unity_p) {
        b.tau_p(i, j) = 1.0;
      } else {
        const double dp = b.p_energy[i] * b.p_energy[j];
        b.tau_p(i, j) = dp > 0.0 ? np(i, j) / dp : 0.0;
      }
      const double denom = std::sqrt(ns(i, j)) * std::sqrt(np(i, j));
      b.kappa(i, j) = denom > 0.0 ? tt(i, j) / denom : 0.0;
      b.tau_q(i, j) = b.kappa(i, j) * b.kappa(i, j);
    }
  }
  double rx = 0.0, sb = 0.0, pb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rx += b.rho_diag[i];
    sb += b.s_energy[i];
    pb += b.p_energy[i];
  }
  b.rx2 = rx / static_cast<double>(n);
  b.s_bar = sb / static_cast<double>(n);
  b.p_bar = pb / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      b.sum_tau_x += b.tau_x(i, j);
      b.sum_tau_s += b.tau_s(i, j);
      if (i != j) b.sum_tau_s_offdiag += b.tau_s(i, j);
      b.sum_tau_p += b.tau_p(i, j);
      b.sum_tau_q += b.tau_q(i, j);
    }
  return b;
}

SpectralStats spectral_stats(const NtkGram& h, bool with_eigenvalues) {
  const SymMatrix& H = h.matrix;
  const std::size_t n = H.size();
  if (n == 0) throw Error(ErrorKind::InvalidInput, "spectral_stats: empty matrix");
  SpectralStats st;
  const double nd = static_cast<double>(n);
  st.mu = trace(H) / nd;
  st.second_moment = norm2(H.matrix().data()) / nd;
  st.v = st.second_moment - st.mu * st.mu;
  double dv = 0.0;
  for (std::size_t i = 0; i < n; ++i) dv += (H(i, i) - st.mu) * (H(i, i) - st.mu);
  st.diag_var = dv / nd;
  if (with_eigenvalues) st.eigenvalues = sym_eigendecompose(H).eigenvalues;
  return st;
}

namespace {

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

}  // namespace

IdentityReport verify_mean_identity(const TwoLayerModel& model, const EncodedDataset& data) {
  const SimilarityBundle b = similarity_bundle(model, data, FactorConvention::literal);
  const std::size_t n = b.n, m = b.m;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    sum += b.rho_diag[i] * b.s_energy[i] * b.p_energy[i] * std::sqrt(b.tau_s(i, i) * b.tau_p(i, i)) * b.kappa(i, i);
  IdentityReport rep;
  rep.similarity_form = b.a * b.a / (static_cast<double>(n) * static_cast<double>(m)) * sum;
  rep.direct = trace(assemble_beta_kernel(model, data).matrix) / static_cast<double>(n);
  rep.rel_err = rel(rep.similarity_form, rep.direct);
  rep.exact_ntk_value = trace(assemble_ntk(model, data).matrix) / static_cast<double>(n);
  rep.kernel_gap = rel(rep.direct, rep.exact_ntk_value);
  return rep;
}

IdentityReport verify_second_moment_identity(const TwoLayerModel& model, const EncodedDataset& data) {
  const SimilarityBundle b = similarity_bundle(model, data, FactorConvention::literal);
  const std::size_t n = b.n, m = b.m;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      sum += (b.rho_diag[i] * b.rho_diag[j] * b.tau_x(i, j)) * (b.s_energy[i] * b.s_energy[j] * b.tau_s(i, j)) *
             (b.p_energy[i] * b.p_energy[j] * b.tau_p(i, j)) * b.tau_q(i, j);
  const double a4 = std::pow(b.a, 4);
  IdentityReport rep;
  rep.similarity_form = a4 / (static_cast<double>(n) * static_cast<double>(m) * static_cast<double>(m)) * sum;
  rep.direct = norm2(assemble_beta_kernel(model, data).matrix.matrix().data()) / static_cast<double>(n);
  rep.rel_err = rel(rep.similarity_form, rep.direct);
  rep.exact_ntk_value = norm2(assemble_ntk(model, data).matrix.matrix().data()) / static_cast<double>(n);
  rep.kernel_gap = rel(rep.direct, rep.exact_ntk_value);
  return rep;
}

namespace {

double four_factor_sum(const SimilarityBundle& b, bool with_pq, TauFamily scaled = TauFamily::x, double scale = 1.0) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.n; ++i)
    for (std::size_t j = 0; j < b.n; ++j) {
      if (i == j) continue;
      double tx = b.tau_x(i, j), ts = b.tau_s(i, j);
      double tp = with_pq ? b.tau_p(i, j) : 1.0, tq = with_pq ? b.tau_q(i, j) : 1.0;
      switch (scaled) {
        case TauFamily::x: tx *= scale; break;
        case TauFamily::s: ts *= scale; break;
        case TauFamily::p: tp *= with_pq ? scale : 1.0; break;
        case TauFamily::q: tq *= with_pq ? scale : 1.0; break;
      }
      s += tx * ts * tp * tq;
    }
  return s;
}

double baseline_prefactor(const SimilarityBundle& b, double a, std::size_t m, std::size_t n) {
  const double md = static_cast<double>(m);
  return std::pow(a, 4) * b.rx2 * b.rx2 * b.s_bar * b.s_bar / (static_cast<double>(n) * md * md);
}

}  // namespace

double variance_proxy_baseline(const SimilarityBundle& b, double a, std::size_t m, std::size_t n) {
  if (n <= 1) return 0.0;
  return baseline_prefactor(b, a, m, n) * four_factor_sum(b, false);
}

double variance_proxy_hadamard(const SimilarityBundle& b, double a, std::size_t m, std::size_t n) {
  if (n <= 1) return 0.0;
  return baseline_prefactor(b, a, m, n) * b.p_bar * b.p_bar * four_factor_sum(b, true);
}

ProbeResult monotonicity_probe(const SimilarityBundle& b, TauFamily family, double scale) {
  if (!(scale >= 0.0 && scale <= 1.0)) throw Error(ErrorKind::InvalidInput, "monotonicity_probe: scale must be in [0, 1]");
  ProbeResult r;
  r.before = variance_proxy_hadamard(b, b.a, b.m, b.n);
  if (b.n <= 1) return r;
  r.after = baseline_prefactor(b, b.a, b.m, b.n) * b.p_bar * b.p_bar * four_factor_sum(b, true, family, scale);
  return r;
}

EnergyWeighted energy_weighted_similarity(const Matrix& hidden, const Normalization& scheme) {
  if (!scheme.normalized()) throw Error(ErrorKind::InvalidInput, "energy_weighted_similarity: scheme must be sp or topk");
  const std::size_t n = hidden.rows(), m = hidden.cols();
  Matrix sq(n, m);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto mask = scheme.kind == Normalization::Kind::topk ? topk_mask(hidden.row(i), scheme.k)
                                                               : std::vector<std::uint8_t>(m, 1);
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r)
      if (mask[r]) s += hidden(i, r) * hidden(i, r);
    if (s < 1e-24) throw Error(ErrorKind::DegenerateEnergy, "energy_weighted_similarity: zero energy");
    energy += s / static_cast<double>(m);
    // squared entries of the unit-normalized masked vector
    for (std::size_t r = 0; r < m; ++r) sq(i, r) = mask[r] ? hidden(i, r) * hidden(i, r) / s : 0.0;
  }
  EnergyWeighted out;
  out.s_bar = energy / static_cast<double>(n);
  out.tau_s = row_gram(sq);
  out.M = out.tau_s;
  for (auto& v : out.M.data()) v *= out.s_bar * out.s_bar;
  return out;
}

Matrix uniform_k_similarity(const Matrix& hidden, std::size_t k, Rng& rng) {
  const std::size_t n = hidden.rows(), m = hidden.cols();
  Matrix sq(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mask = uniform_k_mask(rng, m, k);
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r)
      if (mask[r]) s += hidden(i, r) * hidden(i, r);
    if (s < 1e-24) throw Error(ErrorKind::DegenerateEnergy, "uniform_k_similarity: zero energy");
    for (std::size_t r = 0; r < m; ++r) sq(i, r) = mask[r] ? hidden(i, r) * hidden(i, r) / s : 0.0;
  }
  return row_gram(sq);
}

double mean_offdiag(const Matrix& a) {
  const std::size_t n = a.rows();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += a(i, j);
  return s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace ntks
