#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ntks/models.hpp"

namespace ntks {

namespace {

constexpr char kMagic[] = "NTKS1";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void block(const Vector& v) {
    for (double x : v) f64(x);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}
  void need(std::size_t n) {
    if (pos_ + n > b_.size()) throw Error(ErrorKind::ParseError, "checkpoint: truncated");
  }
  std::uint64_t uint(int nbytes) {
    need(static_cast<std::size_t>(nbytes));
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(nbytes);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  void block(Vector& v) {
    for (auto& x : v) x = f64();
  }
  void magic() {
    need(5);
    if (std::memcmp(b_.data(), kMagic, 5) != 0) throw Error(ErrorKind::ParseError, "checkpoint: bad magic");
    pos_ = 5;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

struct Header {
  std::uint32_t mode = 0;
  std::uint64_t m = 0, d = 0, L = 0;
  std::uint32_t activation = 0, norm_kind = 0;
  std::uint64_t k = 0;
  std::uint32_t modulated = 0, frozen = 1;
  double a_scale = 1.0, init_std = 1.0;
};

void write_header(Writer& w, const Header& h) {
  w.bytes(kMagic, 5);
  w.u32(h.mode);
  w.u64(h.m);
  w.u64(h.d);
  w.u64(h.L);
  w.u32(h.activation);
  w.u32(h.norm_kind);
  w.u64(h.k);
  w.u32(h.modulated);
  w.u32(h.frozen);
  w.f64(h.a_scale);
  w.f64(h.init_std);
}

Header read_header(Reader& r) {
  r.magic();
  Header h;
  h.mode = r.u32();
  h.m = r.u64();
  h.d = r.u64();
  h.L = r.u64();
  h.activation = r.u32();
  h.norm_kind = r.u32();
  h.k = r.u64();
  h.modulated = r.u32();
  h.frozen = r.u32();
  h.a_scale = r.f64();
  h.init_std = r.f64();
  if (h.mode > 2 || h.activation > 1 || h.norm_kind > 2 || h.modulated > 1 || h.frozen > 1)
    throw Error(ErrorKind::ParseError, "checkpoint: bad header field");
  if (h.m == 0 || h.d == 0 || h.L == 0 || h.m > (1u << 24) || h.d > (1u << 24) || h.L > 1024)
    throw Error(ErrorKind::ParseError, "checkpoint: bad dimensions");
  return h;
}

Normalization norm_of(const Header& h) {
  return {static_cast<Normalization::Kind>(h.norm_kind), static_cast<std::size_t>(h.k)};
}

}  // namespace

std::string checkpoint_bytes(const TwoLayerModel& model) {
  Header h;
  h.mode = model.mode == Mode::baseline ? 0 : 1;
  h.m = model.width();
  h.d = model.input_dim();
  h.L = 1;
  h.activation = model.activation == Activation::relu ? 0 : 1;
  h.norm_kind = static_cast<std::uint32_t>(model.norm.kind);
  h.k = model.norm.k;
  h.modulated = model.modulation ? 1 : 0;
  h.frozen = model.modulation ? (model.modulation->frozen ? 1 : 0) : 1;
  h.a_scale = model.a_scale;
  h.init_std = model.init_std;
  Writer w;
  write_header(w, h);
  w.block(model.W.data());
  w.block(model.a);
  if (model.modulation) {
    w.block(model.modulation->A.data());
    w.block(model.modulation->b);
  }
  return w.take();
}

TwoLayerModel two_layer_from_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  const Header h = read_header(r);
  if (h.mode == 2 || h.L != 1) throw Error(ErrorKind::ParseError, "checkpoint: not a two-layer model");
  TwoLayerModel model;
  model.mode = h.mode == 0 ? Mode::baseline : Mode::hadamard;
  model.activation = h.activation == 0 ? Activation::relu : Activation::identity;
  model.norm = norm_of(h);
  model.a_scale = h.a_scale;
  model.init_std = h.init_std;
  model.W = Matrix(h.m, h.d);
  model.a.resize(h.m);
  r.block(model.W.data());
  r.block(model.a);
  if (h.modulated) {
    ModulationMap mm;
    mm.A = Matrix(h.m, h.d);
    mm.b.resize(h.m);
    mm.frozen = h.frozen != 0;
    r.block(mm.A.data());
    r.block(mm.b);
    model.modulation = std::move(mm);
  }
  if (!r.done()) throw Error(ErrorKind::ParseError, "checkpoint: trailing bytes");
  return model;
}

std::string checkpoint_bytes(const MultiLayerModel& model) {
  if (model.layers.empty()) throw Error(ErrorKind::InvalidInput, "checkpoint: empty model");
  const auto& first = model.layers.front();
  Header h;
  h.mode = 2;
  h.m = first.W.rows();
  h.d = first.W.cols();
  h.L = model.layers.size();
  h.activation = model.activation == Activation::relu ? 0 : 1;
  h.norm_kind = static_cast<std::uint32_t>(first.norm.kind);
  h.k = first.norm.k;
  h.modulated = first.modulation ? 1 : 0;
  h.frozen = first.modulation ? (first.modulation->frozen ? 1 : 0) : 1;
  for (const auto& layer : model.layers) {
    if (layer.W.rows() != h.m || layer.norm.kind != first.norm.kind || layer.norm.k != first.norm.k ||
        layer.modulation.has_value() != (h.modulated == 1))
      throw Error(ErrorKind::InvalidInput, "checkpoint: layers must share width, normalization and modulation");
  }
  Writer w;
  write_header(w, h);
  for (const auto& layer : model.layers) w.block(layer.W.data());
  w.block(model.readout);
  for (const auto& layer : model.layers)
    if (layer.modulation) {
      w.block(layer.modulation->A.data());
      w.block(layer.modulation->b);
    }
  return w.take();
}

MultiLayerModel multilayer_from_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  const Header h = read_header(r);
  if (h.mode != 2) throw Error(ErrorKind::ParseError, "checkpoint: not a multilayer model");
  MultiLayerModel model;
  model.activation = h.activation == 0 ? Activation::relu : Activation::identity;
  for (std::uint64_t l = 0; l < h.L; ++l) {
    Layer layer;
    layer.W = Matrix(h.m, l == 0 ? h.d : h.m);
    layer.norm = norm_of(h);
    r.block(layer.W.data());
    model.layers.push_back(std::move(layer));
  }
  model.readout.resize(h.m);
  r.block(model.readout);
  if (h.modulated)
    for (auto& layer : model.layers) {
      ModulationMap mm;
      mm.A = Matrix(h.m, h.d);
      mm.b.resize(h.m);
      mm.frozen = h.frozen != 0;
      r.block(mm.A.data());
      r.block(mm.b);
      layer.modulation = std::move(mm);
    }
  if (!r.done()) throw Error(ErrorKind::ParseError, "checkpoint: trailing bytes");
  return model;
}

void save_checkpoint(const std::string& path, const TwoLayerModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  const std::string b = checkpoint_bytes(model);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

TwoLayerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return two_layer_from_checkpoint(ss.str());
}

}  // namespace ntks
