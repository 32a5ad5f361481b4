#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ntks/experiment.hpp"

namespace ntks {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::InvalidConfig, field + ": " + why);
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) bad(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
}

class Fields {
 public:
  Fields(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {}

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  bool has(const std::string& key) const { return obj_.contains(key) && !obj_.at(key).is_null(); }

  double real(const std::string& key, double lo, double hi, bool lo_open = false) const {
    const json& v = obj_.at(key);
    if (!v.is_number()) bad(name(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x > hi || (lo_open ? x <= lo : x < lo)) bad(name(key), "out of range");
    return x;
  }

  std::uint64_t integer(const std::string& key, std::uint64_t lo, std::uint64_t hi) const {
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) bad(name(key), "expected an integer");
    if (v.is_number_unsigned() ? false : v.get<std::int64_t>() < 0) bad(name(key), "out of range");
    const auto x = v.get<std::uint64_t>();
    if (x < lo || x > hi) bad(name(key), "out of range");
    return x;
  }

  std::string string(const std::string& key) const {
    const json& v = obj_.at(key);
    if (!v.is_string()) bad(name(key), "expected a string");
    return v.get<std::string>();
  }

  const json& raw(const std::string& key) const { return obj_.at(key); }

 private:
  const json& obj_;
  std::string prefix_;
};

constexpr std::uint64_t kMaxSize = 1u << 20;

TargetKind parse_target(const Fields& f, const std::string& key) {
  const std::string t = f.string(key);
  if (t == "freq_mix") return TargetKind::freq_mix;
  if (t == "step") return TargetKind::step;
  if (t == "ramp") return TargetKind::ramp;
  bad(f.name(key), "expected freq_mix, step or ramp");
}

Variant variant_field(const Fields& f, const std::string& key) {
  const auto v = parse_variant(f.string(key));
  if (!v) bad(f.name(key), "unknown variant");
  return *v;
}

ExperimentConfig parse_experiment(const json& obj, const std::string& where) {
  if (!obj.is_object()) bad(where, "expected an object");
  reject_unknown(obj,
                 {"config_id", "variant", "n", "m", "L", "d", "sigma", "a", "kappa_init", "topk_eta", "topk_c", "k",
                  "eta", "steps", "record_every", "seed", "target", "image", "grid_side"},
                 where);
  const Fields f(obj, where);
  ExperimentConfig c;
  if (!f.has("variant")) bad(f.name("variant"), "required");
  c.variant = variant_field(f, "variant");
  c.config_id = f.has("config_id") ? f.string("config_id") : to_string(c.variant);
  if (c.config_id.empty() || c.config_id.find_first_of(",\n\r\"/") != std::string::npos)
    bad(f.name("config_id"), "must be non-empty without , \" / or newlines");
  if (f.has("n")) c.n = f.integer("n", 1, kMaxSize);
  if (f.has("m")) c.m = f.integer("m", 1, kMaxSize);
  if (f.has("L")) c.depth = f.integer("L", 1, 64);
  if (f.has("d")) {
    c.d = f.integer("d", 2, kMaxSize);
    if (c.d % 2 != 0) bad(f.name("d"), "must be even");
  }
  if (f.has("sigma")) c.sigma = f.real("sigma", 0.0, 1e6, true);
  if (f.has("a")) c.a = f.real("a", 0.0, 1e6, true);
  if (f.has("kappa_init")) c.kappa_init = f.real("kappa_init", 0.0, 1e6, true);
  if (f.has("topk_eta")) {
    c.topk_eta = f.real("topk_eta", 1.0 / 6.0 - 1e-12, 1.0);
    if (c.topk_eta >= 1.0) bad(f.name("topk_eta"), "out of range");
  }
  if (f.has("topk_c")) c.topk_c = f.real("topk_c", 2.0, 4.0);
  if (f.has("k")) c.k = f.integer("k", 1, kMaxSize);
  if (f.has("eta")) c.eta = f.real("eta", 0.0, 1e12, true);
  if (f.has("steps")) c.steps = f.integer("steps", 0, 10000000);
  if (f.has("record_every")) c.record_every = f.integer("record_every", 0, 10000000);
  if (f.has("seed")) c.seed = f.integer("seed", 0, std::numeric_limits<std::uint64_t>::max());
  if (f.has("target")) c.target = parse_target(f, "target");
  if (f.has("image")) c.image = f.string("image");
  if (f.has("grid_side")) c.grid_side = f.integer("grid_side", 2, 4096);
  if (c.k && *c.k > c.m) bad(f.name("k"), "must be <= m");
  if (!c.image && c.n > c.grid_side * c.grid_side - 1) bad(f.name("n"), "exceeds the number of usable grid points");
  return c;
}

template <typename T>
std::vector<T> list_field(const Fields& f, const std::string& key, double lo, double hi) {
  const json& v = f.raw(key);
  if (!v.is_array() || v.empty()) bad(f.name(key), "expected a non-empty array");
  std::vector<T> out;
  for (const auto& e : v) {
    if (!e.is_number()) bad(f.name(key), "expected numbers");
    if constexpr (std::is_integral_v<T>) {
      if (!e.is_number_integer()) bad(f.name(key), "expected integers");
    }
    const double x = e.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi) bad(f.name(key), "out of range");
    out.push_back(e.get<T>());
  }
  return out;
}

PeValidationConfig parse_pe(const json& obj) {
  const std::string where = "pe_validation";
  if (!obj.is_object()) bad(where, "expected an object");
  reject_unknown(obj, {"d_list", "sigma_list", "delta_list", "grid_side", "mc_draws", "grid_draws", "seed"}, where);
  const Fields f(obj, where);
  PeValidationConfig c;
  if (f.has("d_list")) {
    c.d_list = list_field<std::size_t>(f, "d_list", 2, static_cast<double>(kMaxSize));
    for (auto d : c.d_list)
      if (d % 2) bad(f.name("d_list"), "entries must be even");
  }
  if (f.has("sigma_list")) c.sigma_list = list_field<double>(f, "sigma_list", 1e-9, 1e6);
  if (f.has("delta_list")) c.delta_list = list_field<double>(f, "delta_list", 1e-12, 10.0);
  if (f.has("grid_side")) c.grid_side = f.integer("grid_side", 2, 256);
  if (f.has("mc_draws")) c.mc_draws = f.integer("mc_draws", 10000, 100000000);
  if (f.has("grid_draws")) c.grid_draws = f.integer("grid_draws", 2, 100000);
  if (f.has("seed")) c.seed = f.integer("seed", 0, std::numeric_limits<std::uint64_t>::max());
  return c;
}

DriftSweepConfig parse_drift(const json& obj) {
  const std::string where = "drift_sweep";
  if (!obj.is_object()) bad(where, "expected an object");
  reject_unknown(obj,
                 {"variant", "widths", "seeds", "n", "d", "sigma", "steps", "record_every", "grid_side", "target", "image",
                  "seed"},
                 where);
  const Fields f(obj, where);
  DriftSweepConfig c;
  if (f.has("variant")) c.variant = variant_field(f, "variant");
  if (f.has("widths")) c.widths = list_field<std::size_t>(f, "widths", 1, static_cast<double>(kMaxSize));
  if (f.has("seeds")) c.seeds = f.integer("seeds", 1, 100000);
  if (f.has("n")) c.n = f.integer("n", 1, kMaxSize);
  if (f.has("d")) {
    c.d = f.integer("d", 2, kMaxSize);
    if (c.d % 2 != 0) bad(f.name("d"), "must be even");
  }
  if (f.has("sigma")) c.sigma = f.real("sigma", 0.0, 1e6, true);
  if (f.has("steps")) c.steps = f.integer("steps", 0, 10000000);
  if (f.has("record_every")) c.record_every = f.integer("record_every", 1, 10000000);
  if (f.has("grid_side")) c.grid_side = f.integer("grid_side", 2, 4096);
  if (f.has("target")) c.target = parse_target(f, "target");
  if (f.has("image")) c.image = f.string("image");
  if (f.has("seed")) c.seed = f.integer("seed", 0, std::numeric_limits<std::uint64_t>::max());
  if (!c.image && c.n > c.grid_side * c.grid_side - 1) bad(f.name("n"), "exceeds the number of usable grid points");
  return c;
}

}  // namespace

ConfigSet parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + e.what());
  }

  ConfigSet set;
  auto add_experiments = [&](const json& arr, const std::string& where) {
    if (!arr.is_array()) bad(where, "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      set.experiments.push_back(parse_experiment(arr[i], where + "[" + std::to_string(i) + "]"));
  };

  if (doc.is_array()) {
    add_experiments(doc, "");
  } else if (doc.is_object() && doc.contains("variant")) {
    set.experiments.push_back(parse_experiment(doc, ""));
  } else if (doc.is_object()) {
    reject_unknown(doc, {"experiments", "pe_validation", "drift_sweep"}, "");
    if (doc.contains("experiments")) add_experiments(doc.at("experiments"), "experiments");
    if (doc.contains("pe_validation")) set.pe_validation = parse_pe(doc.at("pe_validation"));
    if (doc.contains("drift_sweep")) set.drift_sweep = parse_drift(doc.at("drift_sweep"));
  } else {
    bad("(root)", "expected an object or array");
  }

  std::set<Variant> seen_variants;
  std::set<std::string> seen_ids;
  for (const auto& c : set.experiments) {
    if (!seen_variants.insert(c.variant).second) bad("variant", std::string("duplicate variant ") + to_string(c.variant));
    if (!seen_ids.insert(c.config_id).second) bad("config_id", "duplicate config_id " + c.config_id);
  }
  return set;
}

ConfigSet parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace ntks
