#include <cmath>
#include <cstdio>
#include <sstream>

#include "ntks/experiment.hpp"

namespace ntks {

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5e", v);
  return buf;
}

namespace {

// Quotes fields that contain a comma or a quote.
std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

class Csv {
 public:
  explicit Csv(std::initializer_list<const char*> header) {
    bool first = true;
    for (const char* h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }
  Csv& s(const std::string& v) { return put(field(v)); }
  Csv& u(std::uint64_t v) { return put(std::to_string(v)); }
  Csv& r(double v) { return put(format_real(v)); }
  void end() {
    out_ << '\n';
    first_ = true;
  }
  std::string str() const { return out_.str(); }

 private:
  Csv& put(const std::string& v) {
    if (!first_) out_ << ',';
    out_ << v;
    first_ = false;
    return *this;
  }
  std::ostringstream out_;
  bool first_ = true;
};

void stats_fields(Csv& c, const NtkStatsRow& row) {
  c.s(row.config_id).u(row.seed).s(to_string(row.variant)).u(row.n).u(row.m);
  if (!row.error.empty() && row.stats.eigenvalues.empty()) {
    for (int i = 0; i < 15; ++i) c.s("");
    return;
  }
  c.r(row.stats.mu).r(row.stats.v).r(row.stats.diag_var).r(row.s_bar).r(row.p_bar);
  c.r(row.sum_tau_x).r(row.sum_tau_s).r(row.sum_tau_p).r(row.sum_tau_q).r(row.proxy);
  c.r(row.identity_err_mean).r(row.identity_err_second);
  c.r(row.sum_tau_s_offdiag).r(row.kernel_gap_mean).r(row.kernel_gap_second);
}

#define NTK_STATS_HEADER                                                                                             \
  "config_id", "seed", "variant", "n", "m", "mu_lambda", "v_lambda", "diag_var", "S_bar", "P_bar", "sum_tau_x",    \
      "sum_tau_s", "sum_tau_p", "sum_tau_q", "proxy", "exact_identity_err_mean", "exact_identity_err_second",       \
      "sum_tau_s_offdiag", "beta_kernel_gap_mean", "beta_kernel_gap_second"

}  // namespace

std::string ntk_stats_csv(const std::vector<NtkStatsRow>& rows) {
  Csv c({NTK_STATS_HEADER, "error"});
  for (const auto& row : rows) {
    stats_fields(c, row);
    c.s(row.error);
    c.end();
  }
  return c.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  Csv c({NTK_STATS_HEADER, "eta", "eta_clamped", "steps", "final_psnr", "error"});
  for (const auto& row : rows) {
    NtkStatsRow st = row.stats;
    if (!row.error.empty() && st.error.empty()) st.error = row.error;
    stats_fields(c, st);
    c.r(row.eta).u(row.eta_clamped ? 1 : 0).u(row.steps).r(row.final_psnr).s(row.error);
    c.end();
  }
  return c.str();
}

std::string train_csv(const TrainResult& r) {
  Csv c({"config_id", "seed", "step", "loss", "psnr", "eps_k", "h_drift_opnorm", "max_w_drift", "eps_k_zero_init",
         "error"});
  if (!r.error.empty()) {
    c.s(r.config_id).u(r.seed).s("").s("").s("").s("").s("").s("").s("").s(r.error);
    c.end();
    return c.str();
  }
  for (const auto& s : r.trace.steps) {
    if (!s.recorded) continue;
    c.s(r.config_id).u(r.seed).u(s.step).r(s.loss).r(s.psnr).r(s.eps_k).r(s.h_drift_opnorm).r(s.max_w_drift);
    c.r(s.eps_k_zero_init).s("");
    c.end();
  }
  return c.str();
}

std::string pe_csv(const std::vector<PeRow>& rows, const std::string& config_id, std::uint64_t seed) {
  Csv c({"config_id", "seed", "quantity", "d", "sigma", "delta_norm", "closed_form", "mc_mean", "mc_stderr", "z_score"});
  for (const auto& r : rows) {
    c.s(config_id).u(seed).s(r.quantity);
    if (r.d) c.u(r.d); else c.s("");
    if (r.sigma > 0) c.r(r.sigma); else c.s("");
    if (r.delta_norm) c.r(*r.delta_norm); else c.s("");
    c.r(r.closed_form).r(r.mc_mean).r(r.mc_stderr).r(r.z_score);
    c.end();
  }
  return c.str();
}

std::string drift_csv(const std::vector<DriftRow>& rows, const std::string& config_id) {
  Csv c({"config_id", "m", "seed", "sup_eps", "sup_drift", "sup_eps_zero_init", "final_drift", "error"});
  for (const auto& r : rows) {
    c.s(config_id).u(r.m).u(r.seed).r(r.sup_eps).r(r.sup_drift).r(r.sup_eps_zero_init).r(r.final_drift).s(r.error);
    c.end();
  }
  return c.str();
}

std::string spectra_csv(const std::vector<NtkStatsRow>& rows) {
  Csv c({"config_id", "seed", "variant", "index", "eigenvalue"});
  for (const auto& row : rows)
    for (std::size_t k = 0; k < row.stats.eigenvalues.size(); ++k) {
      c.s(row.config_id).u(row.seed).s(to_string(row.variant)).u(k).r(row.stats.eigenvalues[k]);
      c.end();
    }
  return c.str();
}

}  // namespace ntks
