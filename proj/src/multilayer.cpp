#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ntks/models.hpp"

namespace ntks {

MultiLayerModel make_multilayer(Rng& rng, const MultiLayerSpec& spec) {
  if (spec.depth == 0 || spec.width == 0 || spec.input_dim == 0)
    throw Error(ErrorKind::InvalidInput, "multilayer: depth, width and input_dim must be >= 1");
  if (spec.norm.kind == Normalization::Kind::topk && (spec.norm.k == 0 || spec.norm.k > spec.width))
    throw Error(ErrorKind::InvalidInput, "topk: k must be in [1, width]");
  MultiLayerModel model;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l < spec.depth; ++l) {
    Layer layer;
    const double std = l == 0 ? spec.init_std : spec.init_std / std::sqrt(static_cast<double>(fan_in));
    layer.W = gaussian_matrix(rng, spec.width, fan_in, std);
    layer.norm = spec.norm;
    model.layers.push_back(std::move(layer));
    fan_in = spec.width;
  }
  model.readout.resize(spec.width);
  const double scale = spec.readout_scale / std::sqrt(static_cast<double>(spec.width));
  for (auto& v : model.readout) v = (rng.next_u64() >> 63) ? scale : -scale;
  if (spec.modulated)
    for (auto& layer : model.layers)
      layer.modulation = make_modulation(rng, spec.width, spec.input_dim, 1.0, spec.modulation_frozen);
  return model;
}

MultiLayerModel to_multilayer(const TwoLayerModel& model) {
  MultiLayerModel out;
  Layer layer;
  layer.W = model.W;
  layer.norm = model.mode == Mode::hadamard ? model.norm : Normalization::none();
  layer.modulation = model.modulation;
  out.layers.push_back(std::move(layer));
  out.activation = model.activation;
  const double inv = 1.0 / std::sqrt(static_cast<double>(model.width()));
  out.readout = model.a;
  for (auto& v : out.readout) v *= inv;
  return out;
}

namespace {

struct LayerCache {
  Vector input, z, sigma, h, p, y;
  std::vector<std::uint8_t> gates, mask;
  double energy = 0.0;
};

std::vector<LayerCache> run_forward(const MultiLayerModel& model, std::span<const double> x) {
  if (model.layers.empty()) throw Error(ErrorKind::InvalidInput, "multilayer: no layers");
  if (x.size() != model.input_dim()) throw Error(ErrorKind::InvalidInput, "multilayer: input dimension mismatch");
  std::vector<LayerCache> caches(model.layers.size());
  Vector y(x.begin(), x.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    LayerCache& c = caches[l];
    const std::size_t m = layer.W.rows();
    c.input = y;
    c.z = matvec(layer.W, y);
    c.sigma.resize(m);
    c.gates.resize(m);
    for (std::size_t r = 0; r < m; ++r) {
      if (model.activation == Activation::relu) {
        c.gates[r] = c.z[r] >= 0.0 ? 1 : 0;
        c.sigma[r] = c.z[r] > 0.0 ? c.z[r] : 0.0;
      } else {
        c.gates[r] = 1;
        c.sigma[r] = c.z[r];
      }
    }
    c.mask = layer.norm.kind == Normalization::Kind::topk ? topk_mask(c.sigma, layer.norm.k)
                                                          : std::vector<std::uint8_t>(m, 1);
    c.h = c.sigma;
    if (layer.norm.normalized()) {
      double s = 0.0;
      for (std::size_t r = 0; r < m; ++r)
        if (c.mask[r]) s += c.sigma[r] * c.sigma[r];
      if (s < 1e-24)
        throw Error(ErrorKind::DegenerateEnergy, "layer " + std::to_string(l + 1) + ": hidden energy below 1e-24");
      c.energy = s;
      const double inv = 1.0 / std::sqrt(s);
      for (std::size_t r = 0; r < m; ++r) c.h[r] = c.mask[r] ? c.sigma[r] * inv : 0.0;
    }
    c.p = layer.modulation ? layer.modulation->eval(x) : Vector(m, 1.0);
    c.y.resize(m);
    for (std::size_t r = 0; r < m; ++r) c.y[r] = c.h[r] * c.p[r];
    y = c.y;
  }
  if (model.readout.size() != y.size()) throw Error(ErrorKind::InvalidInput, "multilayer: readout size mismatch");
  return caches;
}

}  // namespace

double multilayer_forward(const MultiLayerModel& model, std::span<const double> x) {
  const auto caches = run_forward(model, x);
  return dot(model.readout, caches.back().y);
}

MultiLayerGradient multilayer_backprop(const MultiLayerModel& model, std::span<const double> x, double upstream) {
  const auto caches = run_forward(model, x);
  const std::size_t L = model.layers.size();
  MultiLayerGradient g;
  g.dW.resize(L);
  g.dA.resize(L);
  g.db.resize(L);
  g.dreadout = caches.back().y;
  for (auto& v : g.dreadout) v *= upstream;

  Vector gy = model.readout;
  for (auto& v : gy) v *= upstream;
  for (std::size_t li = L; li-- > 0;) {
    const Layer& layer = model.layers[li];
    const LayerCache& c = caches[li];
    const std::size_t m = layer.W.rows();

    Vector gh(m);
    for (std::size_t r = 0; r < m; ++r) gh[r] = gy[r] * c.p[r];

    if (layer.modulation && !layer.modulation->frozen) {
      const std::size_t d = layer.modulation->A.cols();
      g.dA[li] = Matrix(m, d);
      g.db[li].assign(m, 0.0);
      for (std::size_t r = 0; r < m; ++r) {
        const double gu = gy[r] * c.h[r] * (1.0 - c.p[r] * c.p[r]);
        g.db[li][r] = gu;
        auto row = g.dA[li].row(r);
        for (std::size_t j = 0; j < d; ++j) row[j] = gu * x[j];
      }
    }

    Vector gsigma(m, 0.0);
    if (layer.norm.normalized()) {
      const double hg = dot(c.h, gh);
      const double inv = 1.0 / std::sqrt(c.energy);
      for (std::size_t r = 0; r < m; ++r)
        if (c.mask[r]) gsigma[r] = (gh[r] - c.h[r] * hg) * inv;
    } else {
      gsigma = gh;
    }

    Vector gz(m);
    for (std::size_t r = 0; r < m; ++r) gz[r] = c.gates[r] ? gsigma[r] : 0.0;

    const std::size_t fan_in = layer.W.cols();
    g.dW[li] = Matrix(m, fan_in);
    for (std::size_t r = 0; r < m; ++r) {
      auto row = g.dW[li].row(r);
      for (std::size_t j = 0; j < fan_in; ++j) row[j] = gz[r] * c.input[j];
    }
    if (li > 0) gy = matvec_transpose(layer.W, gz);
  }
  return g;
}

KinkMargins kink_margins(const MultiLayerModel& model, std::span<const double> x) {
  const auto caches = run_forward(model, x);
  KinkMargins km;
  km.min_abs_preact = std::numeric_limits<double>::infinity();
  km.min_topk_gap = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < caches.size(); ++l) {
    for (double z : caches[l].z) km.min_abs_preact = std::min(km.min_abs_preact, std::abs(z));
    const Normalization& nm = model.layers[l].norm;
    if (nm.kind == Normalization::Kind::topk && nm.k < caches[l].sigma.size()) {
      Vector s = caches[l].sigma;
      std::sort(s.begin(), s.end(), std::greater<>());
      if (s[nm.k - 1] > 0.0) km.min_topk_gap = std::min(km.min_topk_gap, s[nm.k - 1] - s[nm.k]);
    }
  }
  return km;
}

namespace {

template <typename F>
void visit_blocks(const MultiLayerModel& model, ParameterScope scope, F&& f) {
  // f(block index kind, layer) is called in flat order.
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    f(0, l);
    if (scope == ParameterScope::first_layer) return;
  }
  f(1, 0);
  for (std::size_t l = 0; l < model.layers.size(); ++l)
    if (model.layers[l].modulation && !model.layers[l].modulation->frozen) {
      f(2, l);
      f(3, l);
    }
}

}  // namespace

Vector flatten_parameters(const MultiLayerModel& model, ParameterScope scope) {
  Vector out;
  visit_blocks(model, scope, [&](int kind, std::size_t l) {
    const auto& layer = model.layers[l];
    const Vector& src = kind == 0 ? layer.W.data()
                        : kind == 1 ? model.readout
                        : kind == 2 ? layer.modulation->A.data()
                                    : layer.modulation->b;
    out.insert(out.end(), src.begin(), src.end());
  });
  return out;
}

void set_parameters(MultiLayerModel& model, ParameterScope scope, std::span<const double> flat) {
  std::size_t pos = 0;
  visit_blocks(model, scope, [&](int kind, std::size_t l) {
    auto& layer = model.layers[l];
    Vector& dst = kind == 0 ? layer.W.data()
                  : kind == 1 ? model.readout
                  : kind == 2 ? layer.modulation->A.data()
                              : layer.modulation->b;
    if (pos + dst.size() > flat.size()) throw Error(ErrorKind::InvalidInput, "set_parameters: vector too short");
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()), dst.begin());
    pos += dst.size();
  });
  if (pos != flat.size()) throw Error(ErrorKind::InvalidInput, "set_parameters: vector too long");
}

Vector flatten_gradient(const MultiLayerModel& model, const MultiLayerGradient& g, ParameterScope scope) {
  Vector out;
  visit_blocks(model, scope, [&](int kind, std::size_t l) {
    const Vector& src = kind == 0 ? g.dW[l].data() : kind == 1 ? g.dreadout : kind == 2 ? g.dA[l].data() : g.db[l];
    out.insert(out.end(), src.begin(), src.end());
  });
  return out;
}

}  // namespace ntks
