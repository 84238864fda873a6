#pragma once

// Forward kernels with optional activation caches, and their backward passes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "evk/editformer.hpp"
#include "evk/error.hpp"

namespace evk::editformer::detail {

constexpr double kNormEps = 1e-6;

// C = A B
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      const T aik = a(i, k);
      for (int j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

// C += A^T B
template <class T>
void add_matmul_at_b(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  for (int r = 0; r < a.rows; ++r)
    for (int i = 0; i < a.cols; ++i) {
      const T ari = a(r, i);
      for (int j = 0; j < b.cols; ++j) c(i, j) += ari * b(r, j);
    }
}

// C = A B^T
template <class T>
Matrix<T> matmul_a_bt(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      T s = 0;
      for (int k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  return c;
}

template <class T>
void add_into(Matrix<T>& a, const Matrix<T>& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

template <class T>
struct LnCache {
  Matrix<T> xhat;
  std::vector<T> inv_std;
};

// gamma == nullptr: parameter-free normalization.
template <class T>
Matrix<T> ln_forward(const Matrix<T>& x, const NormWeights<T>* nw, LnCache<T>* cache) {
  Matrix<T> y(x.rows, x.cols);
  if (cache) {
    cache->xhat = Matrix<T>(x.rows, x.cols);
    cache->inv_std.assign(x.rows, T(0));
  }
  for (int r = 0; r < x.rows; ++r) {
    T mean = 0;
    for (int c = 0; c < x.cols; ++c) mean += x(r, c);
    mean /= T(x.cols);
    T var = 0;
    for (int c = 0; c < x.cols; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= T(x.cols);
    const T inv = T(1) / std::sqrt(var + T(kNormEps));
    for (int c = 0; c < x.cols; ++c) {
      const T xh = (x(r, c) - mean) * inv;
      y(r, c) = nw ? xh * nw->gamma[c] + nw->beta[c] : xh;
      if (cache) cache->xhat(r, c) = xh;
    }
    if (cache) cache->inv_std[r] = inv;
  }
  return y;
}

template <class T>
Matrix<T> ln_backward(const Matrix<T>& dy, const LnCache<T>& cache, const NormWeights<T>& nw) {
  Matrix<T> dx(dy.rows, dy.cols);
  const T n = T(dy.cols);
  std::vector<T> dxh(dy.cols);
  for (int r = 0; r < dy.rows; ++r) {
    T mean_d = 0, mean_dx = 0;
    for (int c = 0; c < dy.cols; ++c) {
      dxh[c] = dy(r, c) * nw.gamma[c];
      mean_d += dxh[c];
      mean_dx += dxh[c] * cache.xhat(r, c);
    }
    mean_d /= n;
    mean_dx /= n;
    for (int c = 0; c < dy.cols; ++c)
      dx(r, c) = cache.inv_std[r] * (dxh[c] - mean_d - cache.xhat(r, c) * mean_dx);
  }
  return dx;
}

template <class T>
struct AttnCache {
  Matrix<T> xq, xkv, q, k, v, o;
  std::vector<Matrix<T>> p;  // per head
};

template <class T>
Matrix<T> attn_forward(const AttentionWeights<T>& w, const Matrix<T>& xq, const Matrix<T>& xkv, int heads,
                       AttnCache<T>* cache) {
  if (xq.cols != w.wq.rows || xkv.cols != w.wk.rows || xkv.rows < 1)
    throw Error(ErrorKind::ShapeMismatch, "attention input widths do not match the projections");
  const int D = w.wq.cols, dh = D / heads;
  const Matrix<T> q = matmul(xq, w.wq), k = matmul(xkv, w.wk), v = matmul(xkv, w.wv);
  Matrix<T> o(xq.rows, D);
  std::vector<Matrix<T>> probs;
  const T scale = T(1) / std::sqrt(T(dh));
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    Matrix<T> p(xq.rows, xkv.rows);
    for (int i = 0; i < xq.rows; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < xkv.rows; ++j) {
        T s = 0;
        for (int c = 0; c < dh; ++c) s += q(i, off + c) * k(j, off + c);
        p(i, j) = s * scale;
        mx = std::max(mx, p(i, j));
      }
      T sum = 0;
      for (int j = 0; j < xkv.rows; ++j) {
        p(i, j) = std::exp(p(i, j) - mx);
        sum += p(i, j);
      }
      for (int j = 0; j < xkv.rows; ++j) p(i, j) /= sum;
      for (int j = 0; j < xkv.rows; ++j) {
        const T pij = p(i, j);
        for (int c = 0; c < dh; ++c) o(i, off + c) += pij * v(j, off + c);
      }
    }
    if (cache) probs.push_back(std::move(p));
  }
  Matrix<T> out = matmul(o, w.wo);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->o = std::move(o);
    cache->p = std::move(probs);
  }
  return out;
}

// Backward through attention. dxq/dxkv/grad may be null when not needed;
// dxkv and grad are accumulated into.
template <class T>
void attn_backward(const AttentionWeights<T>& w, const AttnCache<T>& c, const Matrix<T>& dout, int heads,
                   Matrix<T>* dxq, Matrix<T>* dxkv, AttentionWeights<T>* grad) {
  const int D = w.wq.cols, dh = D / heads;
  const int Lq = c.xq.rows, Lk = c.xkv.rows;
  if (grad) add_matmul_at_b(c.o, dout, grad->wo);
  const Matrix<T> d_o = matmul_a_bt(dout, w.wo);
  Matrix<T> dq(Lq, D), dk(Lk, D), dv(Lk, D);
  const T scale = T(1) / std::sqrt(T(dh));
  std::vector<T> dp(Lk);
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    const Matrix<T>& p = c.p[h];
    for (int i = 0; i < Lq; ++i) {
      T dot = 0;
      for (int j = 0; j < Lk; ++j) {
        T s = 0;
        for (int cc = 0; cc < dh; ++cc) s += d_o(i, off + cc) * c.v(j, off + cc);
        dp[j] = s;
        dot += s * p(i, j);
      }
      for (int j = 0; j < Lk; ++j) {
        const T pij = p(i, j);
        for (int cc = 0; cc < dh; ++cc) dv(j, off + cc) += pij * d_o(i, off + cc);
        const T ds = pij * (dp[j] - dot) * scale;
        for (int cc = 0; cc < dh; ++cc) {
          dq(i, off + cc) += ds * c.k(j, off + cc);
          dk(j, off + cc) += ds * c.q(i, off + cc);
        }
      }
    }
  }
  if (grad) {
    add_matmul_at_b(c.xq, dq, grad->wq);
    add_matmul_at_b(c.xkv, dk, grad->wk);
    add_matmul_at_b(c.xkv, dv, grad->wv);
  }
  if (dxq) *dxq = matmul_a_bt(dq, w.wq);
  if (dxkv) {
    add_into(*dxkv, matmul_a_bt(dk, w.wk));
    add_into(*dxkv, matmul_a_bt(dv, w.wv));
  }
}

template <class T>
T gelu(T x) {
  const T k = T(0.7978845608028654);  // sqrt(2 / pi)
  return T(0.5) * x * (T(1) + std::tanh(k * (x + T(0.044715) * x * x * x)));
}

template <class T>
T gelu_grad(T x) {
  const T k = T(0.7978845608028654);
  const T inner = k * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(inner);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * k * (T(1) + T(3 * 0.044715) * x * x);
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
struct Guidance {
  const Matrix<T>* f1;
  const Matrix<T>* f2;
  const GatePair<T>* gates;
};

template <class T>
struct LayerCache {
  LnCache<T> ln1, ln2, ln3;
  AttnCache<T> sa, g1, g2, ia;
  Matrix<T> h2, h3, u, a;
};

template <class T>
Matrix<T> layer_forward(const LayerWeights<T>& lw, const Matrix<T>& x, const Matrix<T>& cond, int heads,
                        const Guidance<T>* guide, LayerCache<T>* cache, Matrix<T>* feature) {
  const int D = static_cast<int>(lw.norm1.gamma.size());
  if (x.cols != D || x.rows < 1) throw Error(ErrorKind::ShapeMismatch, "token width does not match d_model");
  if (cond.cols != lw.image_attn.wk.rows || cond.rows < 1)
    throw Error(ErrorKind::ShapeMismatch, "condition token width does not match the image attention");

  const Matrix<T> n1 = ln_forward(x, &lw.norm1, cache ? &cache->ln1 : nullptr);
  Matrix<T> h = attn_forward(lw.self_attn, n1, n1, heads, cache ? &cache->sa : nullptr);
  if (guide) {
    const auto& g = *guide->gates;
    if (guide->f1->cols != D || guide->f2->cols != D || static_cast<int>(g.g1.size()) != D ||
        static_cast<int>(g.g2.size()) != D)
      throw Error(ErrorKind::ShapeMismatch, "guidance features or gates do not match d_model");
    Matrix<T> h2 = attn_forward(lw.guide1, n1, *guide->f1, heads, cache ? &cache->g1 : nullptr);
    Matrix<T> h3 = attn_forward(lw.guide2, n1, *guide->f2, heads, cache ? &cache->g2 : nullptr);
    for (int r = 0; r < h.rows; ++r)
      for (int c = 0; c < D; ++c) h(r, c) = h(r, c) + g.g1[c] * h2(r, c) + g.g2[c] * h3(r, c);
    if (cache) {
      cache->h2 = std::move(h2);
      cache->h3 = std::move(h3);
    }
  }
  Matrix<T> x1 = x;
  add_into(x1, h);
  if (feature) *feature = ln_forward<T>(x1, nullptr, nullptr);

  const Matrix<T> n2 = ln_forward(x1, &lw.norm2, cache ? &cache->ln2 : nullptr);
  Matrix<T> x2 = x1;
  add_into(x2, attn_forward(lw.image_attn, n2, cond, heads, cache ? &cache->ia : nullptr));

  const Matrix<T> n3 = ln_forward(x2, &lw.norm3, cache ? &cache->ln3 : nullptr);
  Matrix<T> u = matmul(n3, lw.ffn.w1);
  for (int r = 0; r < u.rows; ++r)
    for (int c = 0; c < u.cols; ++c) u(r, c) += lw.ffn.b1[c];
  Matrix<T> a(u.rows, u.cols);
  for (std::size_t i = 0; i < u.v.size(); ++i) a.v[i] = gelu(u.v[i]);
  Matrix<T> f = matmul(a, lw.ffn.w2);
  Matrix<T> x3 = x2;
  for (int r = 0; r < f.rows; ++r)
    for (int c = 0; c < D; ++c) x3(r, c) += f(r, c) + lw.ffn.b2[c];
  if (cache) {
    cache->u = std::move(u);
    cache->a = std::move(a);
  }
  return x3;
}

// Returns dL/dx given dL/dx3. Gate gradients are accumulated into dg1/dg2 and
// guidance weight gradients into grad (when non-null).
template <class T>
Matrix<T> layer_backward(const LayerWeights<T>& lw, const LayerCache<T>& c, const Matrix<T>& dx3, int heads,
                         const GatePair<T>& gates, std::vector<T>& dg1, std::vector<T>& dg2,
                         LayerWeights<T>* grad) {
  const int D = dx3.cols;
  // FFN
  Matrix<T> da = matmul_a_bt(dx3, lw.ffn.w2);
  for (std::size_t i = 0; i < da.v.size(); ++i) da.v[i] *= gelu_grad(c.u.v[i]);
  const Matrix<T> dn3 = matmul_a_bt(da, lw.ffn.w1);
  Matrix<T> dx2 = dx3;
  add_into(dx2, ln_backward(dn3, c.ln3, lw.norm3));
  // image cross-attention (condition is constant)
  Matrix<T> dn2;
  attn_backward<T>(lw.image_attn, c.ia, dx2, heads, &dn2, nullptr, nullptr);
  Matrix<T> dx1 = dx2;
  add_into(dx1, ln_backward(dn2, c.ln2, lw.norm2));
  // merged attention branches
  const Matrix<T>& dh = dx1;
  Matrix<T> dn1(dh.rows, D);
  Matrix<T> dq;
  attn_backward<T>(lw.self_attn, c.sa, dh, heads, &dq, &dn1, nullptr);
  add_into(dn1, dq);
  Matrix<T> dh2(dh.rows, D), dh3(dh.rows, D);
  for (int r = 0; r < dh.rows; ++r)
    for (int cc = 0; cc < D; ++cc) {
      dg1[cc] += dh(r, cc) * c.h2(r, cc);
      dg2[cc] += dh(r, cc) * c.h3(r, cc);
      dh2(r, cc) = gates.g1[cc] * dh(r, cc);
      dh3(r, cc) = gates.g2[cc] * dh(r, cc);
    }
  attn_backward<T>(lw.guide1, c.g1, dh2, heads, &dq, nullptr, grad ? &grad->guide1 : nullptr);
  add_into(dn1, dq);
  attn_backward<T>(lw.guide2, c.g2, dh3, heads, &dq, nullptr, grad ? &grad->guide2 : nullptr);
  add_into(dn1, dq);
  Matrix<T> dx = dx1;
  add_into(dx, ln_backward(dn1, c.ln1, lw.norm1));
  return dx;
}

template <class T>
struct GateCache {
  std::vector<T> in, z1, a1, z2, a2;
};

template <class T>
std::vector<T> affine(std::span<const T> x, const Matrix<T>& w, const std::vector<T>& b) {
  std::vector<T> y(b.begin(), b.end());
  for (int i = 0; i < w.rows; ++i)
    for (int j = 0; j < w.cols; ++j) y[j] += x[i] * w(i, j);
  return y;
}

template <class T>
GatePair<T> gate_forward(const GateWeights<T>& w, std::span<const double> temb, GateCache<T>* cache) {
  if (static_cast<int>(temb.size()) != w.w1.rows)
    throw Error(ErrorKind::ShapeMismatch, "timestep embedding width does not match the gate input");
  const std::vector<T> in(temb.begin(), temb.end());
  const std::vector<T> z1 = affine<T>(in, w.w1, w.b1);
  std::vector<T> a1(z1.size());
  for (std::size_t i = 0; i < z1.size(); ++i) a1[i] = z1[i] * sigmoid(z1[i]);
  const std::vector<T> z2 = affine<T>(a1, w.w2, w.b2);
  std::vector<T> a2(z2.size());
  for (std::size_t i = 0; i < z2.size(); ++i) a2[i] = z2[i] * sigmoid(z2[i]);
  const std::vector<T> o = affine<T>(a2, w.w3, w.b3);
  const std::size_t D = o.size() / 2;
  GatePair<T> g{std::vector<T>(o.begin(), o.begin() + D), std::vector<T>(o.begin() + D, o.end())};
  if (cache) *cache = {in, z1, a1, z2, a2};
  return g;
}

template <class T>
void gate_backward(const GateWeights<T>& w, const GateCache<T>& c, const std::vector<T>& dg1,
                   const std::vector<T>& dg2, GateWeights<T>& grad) {
  std::vector<T> d_o(dg1);
  d_o.insert(d_o.end(), dg2.begin(), dg2.end());
  auto layer = [](const std::vector<T>& x, const Matrix<T>& wm, const std::vector<T>& dy, Matrix<T>& gw,
                  std::vector<T>& gb) {
    std::vector<T> dx(wm.rows, T(0));
    for (int i = 0; i < wm.rows; ++i)
      for (int j = 0; j < wm.cols; ++j) {
        gw(i, j) += x[i] * dy[j];
        dx[i] += wm(i, j) * dy[j];
      }
    for (std::size_t j = 0; j < dy.size(); ++j) gb[j] += dy[j];
    return dx;
  };
  auto silu_back = [](std::vector<T> d, const std::vector<T>& z) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T s = sigmoid(z[i]);
      d[i] *= s * (T(1) + z[i] * (T(1) - s));
    }
    return d;
  };
  const std::vector<T> dz2 = silu_back(layer(c.a2, w.w3, d_o, grad.w3, grad.b3), c.z2);
  const std::vector<T> dz1 = silu_back(layer(c.a1, w.w2, dz2, grad.w2, grad.b2), c.z1);
  layer(c.in, w.w1, dz1, grad.w1, grad.b1);
}

template <class T>
void check_inputs(const ModelWeights<T>& w, const Matrix<T>& tokens, const Matrix<T>& cond) {
  const auto& c = w.config;
  if (tokens.cols != c.d_model || tokens.rows < 1 || tokens.rows > c.seq_len)
    throw Error(ErrorKind::ShapeMismatch, "latent tokens must be [1..seq_len, d_model]");
  if (cond.cols != c.cond_dim || cond.rows < 1)
    throw Error(ErrorKind::ShapeMismatch, "condition tokens must be [n, cond_dim]");
  if (static_cast<int>(w.layers.size()) != c.n_layers)
    throw Error(ErrorKind::ShapeMismatch, "layer count does not match the config");
}

template <class T>
Matrix<T> embed_input(const ModelWeights<T>& w, const Matrix<T>& tokens, double t) {
  const std::vector<double> e = timestep_embedding(t, w.config.t_embed_dim);
  const std::vector<T> te(e.begin(), e.end());
  const std::vector<T> bias = affine<T>(te, w.time_proj, std::vector<T>(w.config.d_model, T(0)));
  Matrix<T> x = tokens;
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) x(r, c) += bias[c];
  return x;
}

template <class T>
struct HeadCache {
  LnCache<T> ln;
  Matrix<T> normed;
};

template <class T>
Matrix<T> output_head(const ModelWeights<T>& w, const Matrix<T>& x, HeadCache<T>* cache) {
  Matrix<T> n = ln_forward(x, &w.out_norm, cache ? &cache->ln : nullptr);
  Matrix<T> y = matmul(n, w.out_proj);
  if (cache) cache->normed = std::move(n);
  return y;
}

template <class T>
struct ModelCache {
  GateCache<T> gate;
  GatePair<T> gates;
  std::vector<LayerCache<T>> layers;
  HeadCache<T> head;
};

template <class T>
Matrix<T> edit_forward_cached(const ModelWeights<T>& w, const Matrix<T>& tokens, double t, const Matrix<T>& cond,
                              const FeatureSets<T>& fs, ModelCache<T>* cache) {
  check_inputs(w, tokens, cond);
  const int N = w.config.n_layers;
  if (static_cast<int>(fs.f1.size()) != N || static_cast<int>(fs.f2.size()) != N)
    throw Error(ErrorKind::ShapeMismatch, "feature sets must hold one tensor per layer");
  const std::vector<double> temb = timestep_embedding(t, w.config.t_embed_dim);
  GatePair<T> gates = gate_forward(w.gate, temb, cache ? &cache->gate : nullptr);
  if (cache) cache->layers.resize(N);
  Matrix<T> x = embed_input(w, tokens, t);
  for (int i = 0; i < N; ++i) {
    const Guidance<T> g{&fs.f1[i], &fs.f2[i], &gates};
    x = layer_forward<T>(w.layers[i], x, cond, w.config.n_heads, &g, cache ? &cache->layers[i] : nullptr, nullptr);
  }
  Matrix<T> y = output_head(w, x, cache ? &cache->head : nullptr);
  if (cache) cache->gates = std::move(gates);
  return y;
}

}  // namespace evk::editformer::detail
