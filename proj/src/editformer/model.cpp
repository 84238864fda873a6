#include <cmath>
#include <string>

#include "evk/editformer.hpp"
#include "evk/error.hpp"
#include "evk/rng.hpp"
#include "ops.hpp"

namespace evk::editformer {

void ModelConfig::validate() const {
  auto pos = [](int v, const char* name) {
    if (v < 1) throw Error(ErrorKind::InvalidArgument, std::string(name) + " must be positive");
  };
  pos(d_model, "d_model");
  pos(n_heads, "n_heads");
  pos(n_layers, "n_layers");
  pos(d_ff, "d_ff");
  pos(seq_len, "seq_len");
  pos(cond_len, "cond_len");
  pos(cond_dim, "cond_dim");
  pos(t_embed_dim, "t_embed_dim");
  pos(gate_hidden, "gate_hidden");
  if (d_model % n_heads != 0) throw Error(ErrorKind::InvalidArgument, "d_model must be divisible by n_heads");
  if (t_embed_dim % 2 != 0) throw Error(ErrorKind::InvalidArgument, "t_embed_dim must be even");
}

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Backbone: return "backbone";
    case ParamGroup::Guide1: return "guide1";
    case ParamGroup::Guide2: return "guide2";
    case ParamGroup::Gate: return "gate";
  }
  return "?";
}

namespace {

template <class T>
Matrix<T> random_matrix(Rng& rng, int rows, int cols, double scale) {
  Matrix<T> m(rows, cols);
  for (auto& x : m.v) x = static_cast<T>(scale * normal(rng));
  return m;
}

template <class T>
AttentionWeights<T> random_attention(Rng& rng, int d_kv, int d, double gain) {
  AttentionWeights<T> a;
  a.wq = random_matrix<T>(rng, d, d, gain / std::sqrt(double(d)));
  a.wk = random_matrix<T>(rng, d_kv, d, gain / std::sqrt(double(d_kv)));
  a.wv = random_matrix<T>(rng, d_kv, d, gain / std::sqrt(double(d_kv)));
  a.wo = random_matrix<T>(rng, d, d, gain / std::sqrt(double(d)));
  return a;
}

template <class T>
NormWeights<T> unit_norm(int d) {
  return {std::vector<T>(d, T(1)), std::vector<T>(d, T(0))};
}

}  // namespace

template <class T>
ModelWeights<T> init_weights(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  ModelWeights<T> w;
  w.config = c;
  const int D = c.d_model;
  Rng rng(derive_seed(seed, 0));
  w.time_proj = random_matrix<T>(rng, c.t_embed_dim, D, 1.0 / std::sqrt(double(c.t_embed_dim)));
  for (int i = 0; i < c.n_layers; ++i) {
    LayerWeights<T> l;
    l.norm1 = unit_norm<T>(D);
    l.norm2 = unit_norm<T>(D);
    l.norm3 = unit_norm<T>(D);
    l.self_attn = random_attention<T>(rng, D, D, 1.0);
    l.image_attn = random_attention<T>(rng, c.cond_dim, D, 1.0);
    l.ffn.w1 = random_matrix<T>(rng, D, c.d_ff, 1.0 / std::sqrt(double(D)));
    l.ffn.b1.assign(c.d_ff, T(0));
    l.ffn.w2 = random_matrix<T>(rng, c.d_ff, D, 1.0 / std::sqrt(double(c.d_ff)));
    l.ffn.b2.assign(D, T(0));
    w.layers.push_back(std::move(l));
  }
  w.out_norm = unit_norm<T>(D);
  w.out_proj = random_matrix<T>(rng, D, D, 1.0 / std::sqrt(double(D)));

  // Trainable parts draw from their own stream so the backbone does not
  // depend on them.
  Rng trng(derive_seed(seed, 1));
  for (auto& l : w.layers) {
    l.guide1 = random_attention<T>(trng, D, D, 1.0);
    l.guide2 = random_attention<T>(trng, D, D, 1.0);
  }
  const int E = c.t_embed_dim, H = c.gate_hidden;
  w.gate.w1 = random_matrix<T>(trng, E, H, 1.0 / std::sqrt(double(E)));
  w.gate.b1.assign(H, T(0));
  w.gate.w2 = random_matrix<T>(trng, H, H, 1.0 / std::sqrt(double(H)));
  w.gate.b2.assign(H, T(0));
  w.gate.w3 = Matrix<T>(H, 2 * D);
  w.gate.b3.assign(2 * D, T(0));
  return w;
}

template <class T>
ModelWeights<T> zeros_like(const ModelWeights<T>& w) {
  ModelWeights<T> z = w;
  for_each_param(z, [](ParamGroup, const std::string&, std::span<T> s) {
    for (auto& x : s) x = T(0);
  });
  return z;
}

template <class To, class From>
ModelWeights<To> cast_weights(const ModelWeights<From>& w) {
  ModelWeights<To> out;
  out.config = w.config;
  out.frozen = w.frozen;
  auto mat = [](const Matrix<From>& m) {
    Matrix<To> r(m.rows, m.cols);
    for (std::size_t i = 0; i < m.v.size(); ++i) r.v[i] = static_cast<To>(m.v[i]);
    return r;
  };
  auto vec = [](const std::vector<From>& v) { return std::vector<To>(v.begin(), v.end()); };
  auto attn = [&](const AttentionWeights<From>& a) {
    return AttentionWeights<To>{mat(a.wq), mat(a.wk), mat(a.wv), mat(a.wo)};
  };
  auto norm = [&](const NormWeights<From>& n) { return NormWeights<To>{vec(n.gamma), vec(n.beta)}; };
  out.time_proj = mat(w.time_proj);
  for (const auto& l : w.layers) {
    LayerWeights<To> r;
    r.norm1 = norm(l.norm1);
    r.norm2 = norm(l.norm2);
    r.norm3 = norm(l.norm3);
    r.self_attn = attn(l.self_attn);
    r.image_attn = attn(l.image_attn);
    r.ffn = {mat(l.ffn.w1), vec(l.ffn.b1), mat(l.ffn.w2), vec(l.ffn.b2)};
    r.guide1 = attn(l.guide1);
    r.guide2 = attn(l.guide2);
    out.layers.push_back(std::move(r));
  }
  out.out_norm = norm(w.out_norm);
  out.out_proj = mat(w.out_proj);
  out.gate = {mat(w.gate.w1), vec(w.gate.b1), mat(w.gate.w2), vec(w.gate.b2), mat(w.gate.w3), vec(w.gate.b3)};
  return out;
}

namespace {

template <class T>
std::uint64_t frozen_hash_impl(const ModelWeights<T>& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for_each_param(w, [&](ParamGroup g, const std::string& name, std::span<const T> s) {
    if (!w.is_frozen(g)) return;
    eat(name.data(), name.size());
    for (T x : s) {
      const double d = static_cast<double>(x);
      eat(&d, sizeof d);
    }
  });
  return h;
}

}  // namespace

std::uint64_t frozen_hash(const ModelWeights<float>& w) { return frozen_hash_impl(w); }
std::uint64_t frozen_hash(const ModelWeights<double>& w) { return frozen_hash_impl(w); }

std::vector<double> timestep_embedding(double t, int width) {
  if (width < 2 || width % 2 != 0) throw Error(ErrorKind::InvalidArgument, "embedding width must be even and >= 2");
  if (!std::isfinite(t)) throw Error(ErrorKind::NonFinite, "timestep is not finite");
  const int half = width / 2;
  std::vector<double> e(width);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    const double arg = 1000.0 * t * freq;
    e[k] = std::cos(arg);
    e[half + k] = std::sin(arg);
  }
  return e;
}

template <class T>
GatePair<T> gate(const GateWeights<T>& w, std::span<const double> t_embedding) {
  return detail::gate_forward<T>(w, t_embedding, nullptr);
}

template <class T>
std::vector<Matrix<T>> attention_probabilities(const AttentionWeights<T>& w, const Matrix<T>& xq,
                                               const Matrix<T>& xkv, int n_heads) {
  detail::AttnCache<T> cache;
  detail::attn_forward(w, xq, xkv, n_heads, &cache);
  return cache.p;
}

template <class T>
Matrix<T> backbone_block_forward(const LayerWeights<T>& lw, const Matrix<T>& x, const Matrix<T>& condition,
                                 int n_heads) {
  return detail::layer_forward<T>(lw, x, condition, n_heads, nullptr, nullptr, nullptr);
}

template <class T>
Matrix<T> dual_block_forward(const LayerWeights<T>& lw, const Matrix<T>& x, const Matrix<T>& f1,
                             const Matrix<T>& f2, const GatePair<T>& gates, const Matrix<T>& condition,
                             int n_heads) {
  const detail::Guidance<T> g{&f1, &f2, &gates};
  return detail::layer_forward<T>(lw, x, condition, n_heads, &g, nullptr, nullptr);
}

template <class T>
BackboneOutput<T> backbone_forward(const ModelWeights<T>& w, const Matrix<T>& tokens, double t,
                                   const Matrix<T>& condition) {
  detail::check_inputs(w, tokens, condition);
  BackboneOutput<T> out;
  Matrix<T> x = detail::embed_input(w, tokens, t);
  for (const auto& lw : w.layers) {
    Matrix<T> feat;
    x = detail::layer_forward<T>(lw, x, condition, w.config.n_heads, nullptr, nullptr, &feat);
    out.features.push_back(std::move(feat));
  }
  out.output = detail::output_head<T>(w, x, nullptr);
  return out;
}

template <class T>
FeatureSets<T> extract_features(const ModelWeights<T>& w, const Matrix<T>& source_tokens,
                                const Matrix<T>& target_condition, const Matrix<T>& empty_condition,
                                FeatureTimes times) {
  if (!(times.t1 >= 0 && times.t1 <= times.t2 && times.t2 <= 1))
    throw Error(ErrorKind::InvalidArgument, "feature times need 0 <= t1 <= t2 <= 1");
  FeatureSets<T> fs;
  fs.f1 = backbone_forward(w, source_tokens, times.t1, empty_condition).features;
  fs.f2 = backbone_forward(w, source_tokens, times.t2, target_condition).features;
  return fs;
}

template <class T>
Matrix<T> edit_forward(const ModelWeights<T>& w, const Matrix<T>& tokens, double t, const Matrix<T>& condition,
                       const FeatureSets<T>& features) {
  return detail::edit_forward_cached<T>(w, tokens, t, condition, features, nullptr);
}

#define EVK_EDITFORMER_INSTANTIATE(T)                                                                                \
  template ModelWeights<T> init_weights<T>(const ModelConfig&, std::uint64_t);                                     \
  template ModelWeights<T> zeros_like<T>(const ModelWeights<T>&);                                                  \
  template GatePair<T> gate<T>(const GateWeights<T>&, std::span<const double>);                                    \
  template std::vector<Matrix<T>> attention_probabilities<T>(const AttentionWeights<T>&, const Matrix<T>&,         \
                                                             const Matrix<T>&, int);                               \
  template Matrix<T> backbone_block_forward<T>(const LayerWeights<T>&, const Matrix<T>&, const Matrix<T>&, int);   \
  template Matrix<T> dual_block_forward<T>(const LayerWeights<T>&, const Matrix<T>&, const Matrix<T>&,             \
                                           const Matrix<T>&, const GatePair<T>&, const Matrix<T>&, int);           \
  template BackboneOutput<T> backbone_forward<T>(const ModelWeights<T>&, const Matrix<T>&, double,                 \
                                                 const Matrix<T>&);                                                \
  template FeatureSets<T> extract_features<T>(const ModelWeights<T>&, const Matrix<T>&, const Matrix<T>&,          \
                                              const Matrix<T>&, FeatureTimes);                                     \
  template Matrix<T> edit_forward<T>(const ModelWeights<T>&, const Matrix<T>&, double, const Matrix<T>&,           \
                                     const FeatureSets<T>&);

EVK_EDITFORMER_INSTANTIATE(float)
EVK_EDITFORMER_INSTANTIATE(double)
#undef EVK_EDITFORMER_INSTANTIATE

template ModelWeights<double> cast_weights<double, float>(const ModelWeights<float>&);
template ModelWeights<float> cast_weights<float, double>(const ModelWeights<double>&);
template ModelWeights<float> cast_weights<float, float>(const ModelWeights<float>&);
template ModelWeights<double> cast_weights<double, double>(const ModelWeights<double>&);

}  // namespace evk::editformer
