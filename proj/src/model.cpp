#include "ssgrl/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ssgrl/errors.hpp"
#include "ssgrl/rng.hpp"

namespace ssgrl {

namespace {

constexpr char kMagic[6] = {'S', 'S', 'G', 'R', 'L', '1'};

struct ParamSpec {
  std::string name;
  Shape shape;
  int fan_in;
};

// Shapes and initialization fan-in per variant, in canonical order.
std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  const bool sd = c.variant == Variant::full || c.variant == Variant::no_si;
  const bool si = c.variant != Variant::no_si;
  if (sd) {
    specs.push_back({"decoupling.U", {c.N, c.d1}, c.N});
    specs.push_back({"decoupling.V", {c.d_s, c.d1}, c.d_s});
    specs.push_back({"decoupling.P", {c.d1, c.d2}, c.d1});
    specs.push_back({"decoupling.b", {1, c.d2}, c.d1});
    specs.push_back({"decoupling.attn_w", {c.d2, 1}, c.d2});
    specs.push_back({"decoupling.attn_b", {1, 1}, c.d2});
  }
  if (c.variant == Variant::no_sd_concat) {
    specs.push_back({"init.W", {c.N + c.d_s, c.d_h}, c.N + c.d_s});
    specs.push_back({"init.b", {1, c.d_h}, c.N + c.d_s});
  }
  if (si) {
    specs.push_back({"propagation.Wz", {2 * c.d_h, c.d_h}, 2 * c.d_h});
    specs.push_back({"propagation.Uz", {c.d_h, c.d_h}, c.d_h});
    specs.push_back({"propagation.Wr", {2 * c.d_h, c.d_h}, 2 * c.d_h});
    specs.push_back({"propagation.Ur", {c.d_h, c.d_h}, c.d_h});
    specs.push_back({"propagation.W", {2 * c.d_h, c.d_h}, 2 * c.d_h});
    specs.push_back({"propagation.U", {c.d_h, c.d_h}, c.d_h});
    specs.push_back({"output.W", {2 * c.d_h, c.d_o}, 2 * c.d_h});
    specs.push_back({"output.b", {1, c.d_o}, 2 * c.d_h});
  }
  const int head_in = c.variant == Variant::no_si ? c.d_h : c.d_o;
  for (int h = 0; h < c.C; ++h) {
    specs.push_back({"head" + std::to_string(h) + ".w", {head_in, 1}, head_in});
    specs.push_back({"head" + std::to_string(h) + ".b", {1, 1}, head_in});
  }
  return specs;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_i32(std::ofstream& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  std::vector<char> bytes;
  std::size_t pos = 0;
  std::string origin;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(origin + ": byte " + std::to_string(pos) + ": " + what);
  }
  void need(std::size_t n) const {
    if (pos + n > bytes.size()) fail("unexpected end of file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(i)]);
    pos += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes.data() + pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_sd") return Variant::no_sd;
  if (s == "no_sd_concat") return Variant::no_sd_concat;
  if (s == "no_si") return Variant::no_si;
  throw ConfigError("unknown variant '" + s +
                    "' (expected full, no_sd, no_sd_concat, no_si)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_sd: return "no_sd";
    case Variant::no_sd_concat: return "no_sd_concat";
    case Variant::no_si: return "no_si";
  }
  throw ConfigError("unknown variant value");
}

void ModelConfig::validate() const {
  for (int dim : {C, W, H, N, d_s, d1, d2, d_h, d_o})
    if (dim < 1) throw ConfigError("model config: all dimensions must be >= 1");
  if (T < 0) throw ConfigError("model config: T must be >= 0");
  if (d_h != N)
    throw ConfigError("model config: d_h (" + std::to_string(d_h) +
                      ") must equal N (" + std::to_string(N) +
                      ") so initial states take the decoupled features");
}

Model::Model(const ModelConfig& cfg) : Model(cfg, true) {}

Model::Model(const ModelConfig& cfg, bool randomize) : cfg_(cfg) {
  cfg_.validate();
  allocate();
  if (!randomize) return;
  Rng rng(cfg_.seed);
  auto params = parameters();
  auto specs = param_specs(cfg_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(specs[i].fan_in));
    for (auto& x : params[i].second->data) x = rng.uniform(-bound, bound);
  }
}

bool Model::has_decoupling() const {
  return cfg_.variant == Variant::full || cfg_.variant == Variant::no_si;
}
bool Model::has_propagation() const { return cfg_.variant != Variant::no_si; }
bool Model::has_output_head() const { return cfg_.variant != Variant::no_si; }

void Model::allocate() {
  auto specs = param_specs(cfg_);
  std::size_t i = 0;
  auto next = [&]() { return Tensor::zeros(specs[i++].shape, true); };
  if (has_decoupling()) {
    dec_.U = next();
    dec_.V = next();
    dec_.P = next();
    dec_.b = next();
    dec_.attn_w = next();
    dec_.attn_b = next();
  }
  if (cfg_.variant == Variant::no_sd_concat) {
    init_W_ = next();
    init_b_ = next();
  }
  if (has_propagation()) {
    prop_.Wz = next();
    prop_.Uz = next();
    prop_.Wr = next();
    prop_.Ur = next();
    prop_.W = next();
    prop_.U = next();
    out_W_ = next();
    out_b_ = next();
  }
  head_w_.clear();
  head_b_.clear();
  for (int h = 0; h < cfg_.C; ++h) {
    head_w_.push_back(next());
    head_b_.push_back(next());
  }
}

NamedParams Model::parameters() const {
  NamedParams params;
  auto specs = param_specs(cfg_);
  std::size_t i = 0;
  auto push = [&](const TensorPtr& t) {
    params.emplace_back(specs[i++].name, t);
  };
  if (has_decoupling()) {
    push(dec_.U);
    push(dec_.V);
    push(dec_.P);
    push(dec_.b);
    push(dec_.attn_w);
    push(dec_.attn_b);
  }
  if (cfg_.variant == Variant::no_sd_concat) {
    push(init_W_);
    push(init_b_);
  }
  if (has_propagation()) {
    push(prop_.Wz);
    push(prop_.Uz);
    push(prop_.Wr);
    push(prop_.Ur);
    push(prop_.W);
    push(prop_.U);
    push(out_W_);
    push(out_b_);
  }
  for (int h = 0; h < cfg_.C; ++h) {
    push(head_w_[static_cast<std::size_t>(h)]);
    push(head_b_[static_cast<std::size_t>(h)]);
  }
  return params;
}

NamedParams Model::fd_parameters() const {
  NamedParams out;
  for (auto& [name, t] : parameters()) {
    if (name == "decoupling.b" || name == "decoupling.attn_b") continue;
    out.emplace_back(name, t);
  }
  return out;
}

void Model::zero_grad() {
  for (auto& [name, t] : parameters()) t->zero_grad();
}

TensorPtr Model::pooled_feature(ComputeGraph& g, const FeatureMap& fm) const {
  const int locations = fm.locations();
  auto uniform = Tensor::full({1, locations}, 1.0 / locations);
  return g.matmul(uniform, g.reshape(fm.values, {locations, fm.N}));
}

ForwardResult Model::forward(ComputeGraph& g, const FeatureMap& fm,
                             const EmbeddingTable& emb,
                             const CooccurrenceGraph& graph,
                             bool want_debug) const {
  if (fm.W != cfg_.W || fm.H != cfg_.H || fm.N != cfg_.N)
    throw ConfigError("forward: feature map is " +
                      shape_str({fm.W, fm.H, fm.N}) + ", config wants " +
                      shape_str({cfg_.W, cfg_.H, cfg_.N}));
  if (emb.C() != cfg_.C)
    throw ConfigError("forward: embedding table has " +
                      std::to_string(emb.C()) + " categories, config wants " +
                      std::to_string(cfg_.C));
  if (emb.dim() != cfg_.d_s)
    throw ConfigError("forward: embeddings are " + std::to_string(emb.dim()) +
                      "-dimensional, config wants " + std::to_string(cfg_.d_s));
  if (graph.C() != cfg_.C)
    throw ConfigError("forward: graph has " + std::to_string(graph.C()) +
                      " nodes, config wants " + std::to_string(cfg_.C));

  ForwardResult result;

  // Initial node states h^0.
  std::vector<TensorPtr> h0;
  DecoupleResult dec_result;
  switch (cfg_.variant) {
    case Variant::full:
    case Variant::no_si: {
      dec_result = decouple(g, fm, emb, dec_);
      h0 = dec_result.features;
      if (want_debug)
        result.attention = extract_attention(dec_result, fm.W, fm.H);
      break;
    }
    case Variant::no_sd: {
      auto pooled = pooled_feature(g, fm);
      h0.assign(static_cast<std::size_t>(cfg_.C), pooled);
      break;
    }
    case Variant::no_sd_concat: {
      auto pooled = pooled_feature(g, fm);
      for (int c = 0; c < cfg_.C; ++c) {
        auto joint = g.concat(pooled, emb.row(c), 1);
        h0.push_back(g.add(g.matmul(joint, init_W_), init_b_));
      }
      break;
    }
  }

  // Per-category logits s_c.
  std::vector<TensorPtr> logits;
  if (cfg_.variant == Variant::no_si) {
    for (int c = 0; c < cfg_.C; ++c) {
      auto s = g.add(g.matmul(h0[static_cast<std::size_t>(c)],
                              head_w_[static_cast<std::size_t>(c)]),
                     head_b_[static_cast<std::size_t>(c)]);
      logits.push_back(s);
    }
  } else {
    auto states = propagate(g, init_states(h0, cfg_.d_h), graph, prop_, cfg_.T);
    for (int c = 0; c < cfg_.C; ++c) {
      auto joint = g.concat(states.h[static_cast<std::size_t>(c)],
                            h0[static_cast<std::size_t>(c)], 1);
      auto o = g.tanh(g.add(g.matmul(joint, out_W_), out_b_));
      auto s = g.add(g.matmul(o, head_w_[static_cast<std::size_t>(c)]),
                     head_b_[static_cast<std::size_t>(c)]);
      logits.push_back(s);
      if (want_debug) {
        result.final_states.push_back(states.h[static_cast<std::size_t>(c)]->data);
        result.outputs.push_back(o->data);
      }
    }
  }

  TensorPtr row;
  for (const auto& s : logits) row = row ? g.concat(row, s, 1) : s;
  result.logits = row;
  result.scores = row->data;
  for (double s : result.scores) result.probs.push_back(sigmoid_value(s));
  if (want_debug)
    for (const auto& f : h0) result.category_features.push_back(f->data);
  return result;
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 6);
  for (int v : {cfg_.C, cfg_.W, cfg_.H, cfg_.N, cfg_.d_s, cfg_.d1, cfg_.d2,
                cfg_.d_h, cfg_.d_o, cfg_.T})
    put_i32(out, v);
  put_i32(out, static_cast<std::int32_t>(cfg_.variant));
  put_u64(out, cfg_.seed);

  auto params = parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t->shape.size()));
    for (int e : t->shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t->data) put_f64(out, v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r;
  r.origin = path.string();
  r.bytes.assign((std::istreambuf_iterator<char>(in)),
                 std::istreambuf_iterator<char>());
  r.need(6);
  if (std::memcmp(r.bytes.data(), kMagic, 6) != 0)
    r.fail("bad magic, expected SSGRL1");
  r.pos = 6;

  ModelConfig cfg;
  cfg.C = r.i32();
  cfg.W = r.i32();
  cfg.H = r.i32();
  cfg.N = r.i32();
  cfg.d_s = r.i32();
  cfg.d1 = r.i32();
  cfg.d2 = r.i32();
  cfg.d_h = r.i32();
  cfg.d_o = r.i32();
  cfg.T = r.i32();
  const int variant = r.i32();
  if (variant < 0 || variant > 3) r.fail("bad variant code");
  cfg.variant = static_cast<Variant>(variant);
  cfg.seed = r.u64();

  Model model(cfg, false);
  auto params = model.parameters();
  const std::uint32_t count = r.u32();
  if (count != params.size())
    r.fail("checkpoint has " + std::to_string(count) + " parameters, " +
           to_string(cfg.variant) + " variant needs " +
           std::to_string(params.size()));
  for (auto& [name, t] : params) {
    const auto name_len = r.u32();
    const std::string stored = r.str(name_len);
    if (stored != name)
      r.fail("expected parameter '" + name + "', found '" + stored + "'");
    const auto rank = r.u32();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i)
      shape.push_back(static_cast<int>(r.u32()));
    if (shape != t->shape)
      r.fail("parameter '" + name + "' has shape " + shape_str(shape) +
             ", expected " + shape_str(t->shape));
    for (auto& v : t->data) v = r.f64();
  }
  if (r.pos != r.bytes.size()) r.fail("trailing bytes after last parameter");
  return model;
}

TensorPtr batch_bce_loss(ComputeGraph& g,
                         const std::vector<TensorPtr>& sample_logits,
                         const std::vector<std::vector<std::uint8_t>>& labels) {
  if (sample_logits.empty() || sample_logits.size() != labels.size())
    throw DimError("batch_bce_loss: need one label row per logit row");
  TensorPtr batch;
  std::vector<double> targets;
  for (std::size_t i = 0; i < sample_logits.size(); ++i) {
    batch = batch ? g.concat(batch, sample_logits[i], 0) : sample_logits[i];
    for (auto y : labels[i]) targets.push_back(static_cast<double>(y));
  }
  return g.bce_with_logits(batch, targets);
}

double sigmoid_value(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace ssgrl
