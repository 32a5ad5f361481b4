#include "ntks/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ntks/parallel.hpp"
#include "ntks/signals.hpp"

namespace ntks {

namespace {

FrozenKernelSystem make_system(NtkGram h0, Vector u0, Vector y, double eta) {
  const std::size_t n = h0.matrix.size();
  if (u0.size() != n || y.size() != n) throw Error(ErrorKind::InvalidInput, "frozen system: size mismatch");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorKind::InvalidStepSize, "frozen system: eta must be >= 0");
  FrozenKernelSystem s;
  s.decomposition = sym_eigendecompose(h0.matrix);
  s.h0 = std::move(h0);
  s.u0 = std::move(u0);
  s.y = std::move(y);
  s.eta = eta;
  return s;
}

// V diag(f(lambda)) V^T e0
template <typename F>
Vector spectral_apply(const FrozenKernelSystem& sys, F&& f) {
  const Vector e0 = sys.initial_error();
  const auto& V = sys.decomposition.eigenvectors;
  const std::size_t n = e0.size();
  const Vector coeff = matvec_transpose(V, e0);
  Vector out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double c = f(sys.decomposition.eigenvalues[k]) * coeff[k];
    if (c == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) out[i] += c * V(i, k);
  }
  return out;
}

double op_norm_of_difference(const SymMatrix& a, const SymMatrix& b) {
  Matrix d = a.matrix();
  const auto& bb = b.matrix().data();
  for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] -= bb[i];
  return operator_norm(SymMatrix(std::move(d)));
}

void check_loss(double loss, std::size_t step) {
  if (!std::isfinite(loss) || loss > 1e12)
    throw Error(ErrorKind::DivergenceDetected, "loss exceeded 1e12 at step " + std::to_string(step));
}

// Shared bookkeeping for both model kinds.
class TraceBuilder {
 public:
  TraceBuilder(const EncodedDataset& data, const TrainOptions& opt, const Vector& u0, const NtkGram* h0)
      : data_(data), opt_(opt), h0_(h0) {
    if (h0_) {
      u_ker_ = u0;
      u_ker0_.assign(u0.size(), 0.0);
    }
  }

  bool should_record(std::size_t k) const {
    return opt_.record_every > 0 && (k % opt_.record_every == 0 || k == opt_.steps);
  }

  StepRecord& add(std::size_t k, const Vector& u) {
    const Vector& y = data_.targets;
    StepRecord rec;
    rec.step = k;
    double l = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) l += 0.5 * (u[i] - y[i]) * (u[i] - y[i]);
    rec.loss = l;
    check_loss(l, k);
    rec.psnr = psnr(u, y);
    if (h0_) {
      rec.eps_k = distance(u, u_ker_);
      rec.eps_k_zero_init = distance(u, u_ker0_);
    }
    trace.steps.push_back(rec);
    return trace.steps.back();
  }

  // Frozen-kernel step u <- u - eta H0 (u - y) for both reference trajectories.
  void advance_frozen() {
    if (!h0_) return;
    step_frozen(u_ker_);
    step_frozen(u_ker0_);
  }

  void note_stability(const StepRecord& rec, double kernel_opnorm) {
    if (have_prev_ && opt_.eta * kernel_opnorm <= 1.0 && rec.loss > prev_loss_ + 1e-9) ++trace.stability_violations;
    have_prev_ = true;
    prev_loss_ = rec.loss;
  }

  TrainTrace trace;

 private:
  static double distance(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
  void step_frozen(Vector& u) {
    const std::size_t n = u.size();
    Vector e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = u[i] - data_.targets[i];
    const Vector he = matvec(h0_->matrix, e);
    for (std::size_t i = 0; i < n; ++i) u[i] -= opt_.eta * he[i];
  }

  const EncodedDataset& data_;
  const TrainOptions& opt_;
  const NtkGram* h0_;
  Vector u_ker_, u_ker0_;
  bool have_prev_ = false;
  double prev_loss_ = 0.0;
};

double max_row_drift(const Matrix& w, const Matrix& w0) {
  double best = 0.0;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = 0.0;
    auto a = w.row(r), b = w0.row(r);
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

void check_train_args(const EncodedDataset& data, std::size_t input_dim, const TrainOptions& opt) {
  if (!(opt.eta >= 0.0) || !std::isfinite(opt.eta)) throw Error(ErrorKind::InvalidStepSize, "train: eta must be >= 0");
  if (data.size() == 0) throw Error(ErrorKind::InvalidInput, "train: empty dataset");
  if (data.dim() != input_dim) throw Error(ErrorKind::InvalidInput, "train: data/model dimension mismatch");
}

}  // namespace

FrozenKernelSystem FrozenKernelSystem::checked(NtkGram h0, Vector u0, Vector y, double eta) {
  const double op = operator_norm(h0.matrix);
  if (!(eta > 0.0) || eta * op > 1.0 + 1e-12)
    throw Error(ErrorKind::InvalidStepSize, "eta must satisfy 0 < eta <= 1/||H0||_2");
  return make_system(std::move(h0), std::move(u0), std::move(y), eta);
}

FrozenKernelSystem FrozenKernelSystem::unchecked(NtkGram h0, Vector u0, Vector y, double eta) {
  return make_system(std::move(h0), std::move(u0), std::move(y), eta);
}

Vector FrozenKernelSystem::initial_error() const {
  Vector e(u0.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = u0[i] - y[i];
  return e;
}

Vector flow_error(const FrozenKernelSystem& sys, double t) {
  if (!(t >= 0.0)) throw Error(ErrorKind::InvalidInput, "flow_error: t must be >= 0");
  if (t == 0.0) return sys.initial_error();
  return spectral_apply(sys, [t](double lam) { return std::exp(-lam * t); });
}

Vector gd_spectral_error(const FrozenKernelSystem& sys, std::size_t k) {
  if (k == 0 || sys.eta == 0.0) return sys.initial_error();
  const double kk = static_cast<double>(k);
  return spectral_apply(sys, [&](double lam) { return std::pow(1.0 - sys.eta * lam, kk); });
}

double gd_linear_rate_bound(const FrozenKernelSystem& sys, std::size_t k) {
  const double lmin = sys.decomposition.eigenvalues.empty() ? 0.0 : sys.decomposition.eigenvalues.back();
  if (!(lmin > 0.0)) throw Error(ErrorKind::DegenerateKernel, "lambda_min(H0) must be > 0");
  const Vector e0 = sys.initial_error();
  return std::pow(1.0 - sys.eta * lmin, static_cast<double>(k)) * norm2(e0);
}

double TrainTrace::sup_eps() const {
  double s = 0.0;
  for (const auto& r : steps) s = std::max(s, r.eps_k);
  return s;
}

double TrainTrace::sup_eps_zero_init() const {
  double s = 0.0;
  for (const auto& r : steps) s = std::max(s, r.eps_k_zero_init);
  return s;
}

double TrainTrace::sup_drift() const {
  double s = 0.0;
  for (const auto& r : steps)
    if (r.recorded) s = std::max(s, r.h_drift_opnorm);
  return s;
}

Vector predict(const TwoLayerModel& model, const Matrix& inputs) {
  Vector u(inputs.rows());
  parallel_for(inputs.rows(), [&](std::size_t i) { u[i] = forward(model, inputs.row(i)); });
  return u;
}

TrainTrace train_finite_width(TwoLayerModel& model, const EncodedDataset& data, const TrainOptions& opt) {
  check_train_args(data, model.input_dim(), opt);
  const std::size_t n = data.size(), m = model.width();
  const Matrix& X = data.inputs;

  Matrix P(n, m, 1.0);
  if (model.modulation)
    for (std::size_t i = 0; i < n; ++i) {
      const Vector p = model.modulation->eval(X.row(i));
      std::copy(p.begin(), p.end(), P.row(i).begin());
    }

  const Matrix W0 = model.W;
  std::optional<NtkGram> h0;
  if (opt.track_frozen || opt.record_every > 0) h0 = assemble_ntk(model, data);

  Vector u(n);
  Matrix C(n, m);
  Matrix G;
  auto evaluate = [&] {
    G = matmul_nt(X, model.W);
    parallel_for(n, [&](std::size_t i) {
      auto gi = G.row(i);
      Vector g(gi.begin(), gi.end());
      const auto pi = P.row(i);
      const HiddenState hs = hidden_state_from_preacts(model, std::move(g), Vector(pi.begin(), pi.end()));
      u[i] = forward_from_state(model, hs);
      const Vector c = gradient_coefficients(model, hs);
      std::copy(c.begin(), c.end(), C.row(i).begin());
    });
  };

  evaluate();
  TraceBuilder tb(data, opt, u, opt.track_frozen ? &*h0 : nullptr);
  for (std::size_t k = 0;; ++k) {
    StepRecord& rec = tb.add(k, u);
    if (tb.should_record(k)) {
      const NtkGram hk = assemble_ntk(model, data);
      rec.recorded = true;
      rec.h_drift_opnorm = op_norm_of_difference(hk.matrix, h0->matrix);
      rec.max_w_drift = max_row_drift(model.W, W0);
      tb.note_stability(rec, operator_norm(hk.matrix));
    }
    if (k == opt.steps) break;

    for (std::size_t i = 0; i < n; ++i) {
      const double e = u[i] - data.targets[i];
      for (auto& c : C.row(i)) c *= e;
    }
    // dW = C^T X
    const Matrix grad = matmul_tn(C, X);
    auto& w = model.W.data();
    for (std::size_t q = 0; q < w.size(); ++q) w[q] -= opt.eta * grad.data()[q];
    tb.advance_frozen();
    evaluate();
  }
  tb.trace.final_predictions = u;
  return std::move(tb.trace);
}

TrainTrace train_finite_width(MultiLayerModel& model, const EncodedDataset& data, const TrainOptions& opt) {
  check_train_args(data, model.input_dim(), opt);
  const std::size_t n = data.size();
  const Matrix& X = data.inputs;
  const Matrix W0 = model.layers.front().W;
  std::optional<NtkGram> h0;
  if (opt.track_frozen || opt.record_every > 0) h0 = jacobian_gram(model, X, ParameterScope::all);

  Vector u(n);
  auto evaluate = [&] {
    parallel_for(n, [&](std::size_t i) { u[i] = multilayer_forward(model, X.row(i)); });
  };
  evaluate();
  TraceBuilder tb(data, opt, u, opt.track_frozen ? &*h0 : nullptr);
  for (std::size_t k = 0;; ++k) {
    StepRecord& rec = tb.add(k, u);
    if (tb.should_record(k)) {
      const NtkGram hk = jacobian_gram(model, X, ParameterScope::all);
      rec.recorded = true;
      rec.h_drift_opnorm = op_norm_of_difference(hk.matrix, h0->matrix);
      rec.max_w_drift = max_row_drift(model.layers.front().W, W0);
      tb.note_stability(rec, operator_norm(hk.matrix));
    }
    if (k == opt.steps) break;

    std::vector<Vector> grads(n);
    parallel_for(n, [&](std::size_t i) {
      grads[i] = flatten_gradient(model, multilayer_backprop(model, X.row(i), u[i] - data.targets[i]), ParameterScope::all);
    });
    Vector theta = flatten_parameters(model, ParameterScope::all);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < theta.size(); ++p) theta[p] -= opt.eta * grads[i][p];
    set_parameters(model, ParameterScope::all, theta);
    tb.advance_frozen();
    evaluate();
  }
  tb.trace.final_predictions = u;
  return std::move(tb.trace);
}

WeylReport weyl_gap_check(const NtkGram& h0, const NtkGram& h_ref) {
  if (h0.matrix.size() != h_ref.matrix.size()) throw Error(ErrorKind::InvalidInput, "weyl_gap_check: size mismatch");
  WeylReport r;
  r.lambda_min_ref = sym_eigendecompose(h_ref.matrix).eigenvalues.back();
  r.lambda_min_h0 = sym_eigendecompose(h0.matrix).eigenvalues.back();
  r.gap_opnorm = op_norm_of_difference(h0.matrix, h_ref.matrix);
  const double slack = 1e-12 * std::max(1.0, max_abs(h_ref.matrix.matrix().data()));
  r.weyl_holds = r.lambda_min_h0 >= r.lambda_min_ref - r.gap_opnorm - slack;
  r.half_gap_holds = r.lambda_min_h0 >= 0.5 * r.lambda_min_ref;
  return r;
}

NtkGram mean_kernel(const std::vector<NtkGram>& ks) {
  if (ks.empty()) throw Error(ErrorKind::InvalidInput, "mean_kernel: empty list");
  Matrix acc(ks[0].matrix.size(), ks[0].matrix.size());
  for (const auto& k : ks) {
    if (k.matrix.size() != acc.rows()) throw Error(ErrorKind::InvalidInput, "mean_kernel: size mismatch");
    for (std::size_t i = 0; i < acc.data().size(); ++i) acc.data()[i] += k.matrix.matrix().data()[i];
  }
  for (auto& v : acc.data()) v /= static_cast<double>(ks.size());
  return {SymMatrix(std::move(acc)), ks[0].provenance};
}

}  // namespace ntks
