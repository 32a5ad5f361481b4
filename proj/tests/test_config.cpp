#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "ntks/experiment.hpp"

using namespace ntks;

namespace {

Error error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(ErrorKind::InvalidInput, "");
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(cells);
  }
  return rows;
}

ExperimentConfig small(Variant v, std::uint64_t seed = 3) {
  ExperimentConfig c;
  c.variant = v;
  c.config_id = to_string(v);
  c.n = 24;
  c.m = 48;
  c.d = 32;
  c.grid_side = 16;
  c.steps = 5;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("defaults") {
  const ConfigSet s = parse_config_text(R"({"variant":"base"})");
  REQUIRE(s.experiments.size() == 1);
  const ExperimentConfig& c = s.experiments[0];
  CHECK(c.config_id == "base");
  CHECK(c.n == 200);
  CHECK(c.m == 512);
  CHECK(c.d == 256);
  CHECK(c.sigma == 10.0);
  CHECK(c.a == 1.0);
  CHECK(c.kappa_init == 1.0);
  CHECK(c.steps == 1000);
  CHECK(c.seed == 7);
  CHECK_FALSE(c.eta.has_value());
  CHECK(c.depth == 1);
}

TEST_CASE("config shapes") {
  const ConfigSet arr = parse_config_text(R"([{"variant":"hada","m":64},{"variant":"base","config_id":"b2"}])");
  REQUIRE(arr.experiments.size() == 2);
  CHECK(arr.experiments[0].m == 64);
  CHECK(arr.experiments[1].config_id == "b2");

  const ConfigSet sec = parse_config_text(R"({"experiments":[{"variant":"hada_topk","k":12}],
    "pe_validation":{"d_list":[16],"sigma_list":[2.5]},
    "drift_sweep":{"widths":[64,128],"seeds":2}})");
  CHECK(sec.experiments[0].k == 12u);
  REQUIRE(sec.pe_validation);
  CHECK(sec.pe_validation->d_list == std::vector<std::size_t>{16});
  CHECK(sec.pe_validation->mc_draws == 100000);
  REQUIRE(sec.drift_sweep);
  CHECK(sec.drift_sweep->widths.size() == 2);
  CHECK(sec.drift_sweep->steps == 200);
}

TEST_CASE("config errors") {
  CHECK(error_of("").kind() == ErrorKind::ParseError);
  const Error e = error_of("{\n\"variant\": \"base\",\n\"n\": 12,,\n}");
  CHECK(e.kind() == ErrorKind::ParseError);
  CHECK(std::string(e.what()).find("line 3") != std::string::npos);

  const Error unk = error_of(R"({"variant":"base","widht":3})");
  CHECK(unk.kind() == ErrorKind::InvalidConfig);
  CHECK(std::string(unk.what()).find("widht") != std::string::npos);

  const Error rng = error_of(R"({"variant":"base","sigma":-1})");
  CHECK(rng.kind() == ErrorKind::InvalidConfig);
  CHECK(std::string(rng.what()).find("sigma") != std::string::npos);

  CHECK(error_of(R"({"variant":"nope"})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"({"variant":"base","d":7})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"({"variant":"base","m":4,"k":5})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"({"variant":"base","n":-3})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"({"variant":"base","n":5000})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"({"variant":"base","topk_c":5})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"([{"variant":"base"},{"variant":"base","config_id":"x"}])").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"({"experiments":[],"extra":1})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of(R"({"pe_validation":{"mc_draws":10}})").kind() == ErrorKind::InvalidConfig);
  CHECK(error_of("42").kind() == ErrorKind::InvalidConfig);
}

TEST_CASE("variant constructions") {
  CHECK(all_variants().size() == 8);
  for (Variant v : all_variants()) CHECK(parse_variant(to_string(v)) == v);
  CHECK_FALSE(traits(Variant::base).encoded);
  CHECK(traits(Variant::base).mode == Mode::baseline);
  CHECK(traits(Variant::rff_pe_enc).encoded);
  CHECK(traits(Variant::rff_pe_enc).mode == Mode::baseline);
  CHECK(traits(Variant::rff_pe_enc_norm).norm == Normalization::Kind::sp);
  CHECK_FALSE(traits(Variant::rff_pe_enc_norm).modulated);
  CHECK(traits(Variant::rff_pe_enc_topk).norm == Normalization::Kind::topk);
  CHECK(traits(Variant::hada_nonorm).modulated);
  CHECK(traits(Variant::hada_nonorm).norm == Normalization::Kind::none);
  CHECK(traits(Variant::hada).modulated);
  CHECK(traits(Variant::hada).norm == Normalization::Kind::sp);
  CHECK(traits(Variant::hada_topk).norm == Normalization::Kind::topk);
}

TEST_CASE("prepared runs share data across variants") {
  const PreparedRun a = prepare_run(small(Variant::base));
  const PreparedRun b = prepare_run(small(Variant::hada));
  CHECK(a.sample_index == b.sample_index);
  CHECK(a.data.targets == b.data.targets);
  CHECK(a.data.dim() == 2);
  CHECK(b.data.dim() == 32);
  CHECK(std::find(a.sample_index.begin(), a.sample_index.end(), 0u) == a.sample_index.end());
  std::vector<std::size_t> sorted = a.sample_index;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());

  ExperimentConfig tk = small(Variant::hada_topk);
  CHECK(prepare_run(tk).model.norm.k == choose_k(48, 1.0 / 6.0, 3.0));
  tk.k = 9;
  CHECK(prepare_run(tk).model.norm.k == 9);

  ExperimentConfig deep = small(Variant::hada);
  deep.depth = 3;
  const PreparedRun d = prepare_run(deep);
  REQUIRE(d.deep);
  CHECK(d.deep->layers.size() == 3);
}

TEST_CASE("step size is clamped to the stability bound") {
  ExperimentConfig c = small(Variant::rff_pe_enc);
  const double op = operator_norm(initial_kernel(prepare_run(c)).matrix);
  c.eta = 10.0 / op;
  const TrainResult r = run_training(c, 0, false);
  CHECK(r.error.empty());
  CHECK(r.eta_clamped);
  CHECK(r.eta == doctest::Approx(1.0 / op).epsilon(1e-12));

  c.eta = 0.5 / op;
  const TrainResult ok = run_training(c, 0, false);
  CHECK_FALSE(ok.eta_clamped);
  CHECK(ok.eta == doctest::Approx(0.5 / op).epsilon(1e-12));

  c.eta.reset();
  CHECK(run_training(c, 0, false).eta == doctest::Approx(0.9 / op).epsilon(1e-12));
}

TEST_CASE("number formatting") {
  CHECK(format_real(1.0) == "1.00000e+00");
  CHECK(format_real(-0.000123456789) == "-1.23457e-04");
  CHECK(format_real(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_real(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("ntk-stats rows carry provenance and are reproducible") {
  std::vector<ExperimentConfig> cfgs;
  for (Variant v : all_variants()) cfgs.push_back(small(v));
  const std::string a = ntk_stats_csv(run_ntk_stats(cfgs));
  const std::string b = ntk_stats_csv(run_ntk_stats(cfgs));
  CHECK(a == b);
  CHECK(a.find('\r') == std::string::npos);
  const auto rows = parse_csv(a);
  REQUIRE(rows.size() == 9);
  CHECK(rows[0][0] == "config_id");
  CHECK(rows[0][1] == "seed");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][0] == to_string(all_variants()[i - 1]));
    CHECK(rows[i][1] == "3");
    CHECK(rows[i].size() == rows[0].size());
    CHECK(rows[i].back().empty());
  }
  const std::vector<std::string> want{"mu_lambda", "v_lambda", "diag_var", "S_bar", "P_bar", "sum_tau_x",
                                      "sum_tau_s", "sum_tau_p", "sum_tau_q", "proxy", "exact_identity_err_mean",
                                      "exact_identity_err_second"};
  for (const auto& col : want) CHECK(std::find(rows[0].begin(), rows[0].end(), col) != rows[0].end());
}

TEST_CASE("a failing ablation row does not stop the others") {
  std::vector<ExperimentConfig> cfgs{small(Variant::base), small(Variant::hada)};
  cfgs[0].image = "/nonexistent/image.pgm";
  AblationOptions opt;
  const auto rows = run_ablation(cfgs, opt);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].error.empty());
  CHECK(rows[1].error.empty());
  CHECK(rows[1].steps == 5);
  CHECK(std::isfinite(rows[1].final_psnr));
  const auto csv = parse_csv(ablation_csv(rows));
  REQUIRE(csv.size() == 3);
  CHECK(csv[1][0] == "base");
  CHECK(csv[2][0] == "hada");
}

TEST_CASE("train trace csv") {
  ExperimentConfig c = small(Variant::hada);
  c.steps = 10;
  const TrainResult r = run_training(c, 5, true);
  const auto rows = parse_csv(train_csv(r));
  REQUIRE(rows.size() == 4);  // header and steps 0, 5, 10
  CHECK(rows[1][0] == "hada");
  CHECK(rows[1][2] == "0");
  CHECK(rows[3][2] == "10");
}

TEST_CASE("PE validation sweep") {
  PeValidationConfig c;
  c.d_list = {64};
  c.sigma_list = {1.0, 2.0, 5.0};
  c.delta_list = {0.05};
  c.grid_side = 6;
  c.mc_draws = 20000;
  c.grid_draws = 10;
  const auto rows = run_pe_validation(c);
  std::vector<double> avg;
  bool raw = false;
  for (const auto& r : rows) {
    if (r.quantity == "raw_avg_offdiag_tau") {
      raw = true;
      continue;
    }
    CHECK(std::abs(r.z_score) <= 4.0);
    if (r.quantity == "avg_offdiag_tau") avg.push_back(r.closed_form);
  }
  CHECK(raw);
  REQUIRE(avg.size() == 3);
  CHECK(avg[0] > avg[1]);
  CHECK(avg[1] > avg[2]);
  const auto csv = parse_csv(pe_csv(rows, "pe", 7));
  CHECK(csv[0][0] == "config_id");
}
