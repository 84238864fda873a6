#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace evk::editformer {

struct ModelConfig {
  int d_model = 16;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 32;
  int seq_len = 8;       // latent tokens
  int cond_len = 4;      // image-condition tokens
  int cond_dim = 8;      // image-condition token width
  int t_embed_dim = 64;  // sinusoidal timestep embedding width (even)
  int gate_hidden = 32;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
};

/// Row-major matrix; tokens are rows.
template <class T>
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Matrix() = default;
  Matrix(int r, int c, T fill = T(0)) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  T& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// x W_q, x_kv W_k, x_kv W_v, then heads concatenated and projected by W_o.
template <class T>
struct AttentionWeights {
  Matrix<T> wq, wk, wv, wo;
};

template <class T>
struct NormWeights {
  std::vector<T> gamma, beta;
};

template <class T>
struct FfnWeights {
  Matrix<T> w1;
  std::vector<T> b1;
  Matrix<T> w2;
  std::vector<T> b2;
};

template <class T>
struct LayerWeights {
  // frozen backbone
  NormWeights<T> norm1, norm2, norm3;
  AttentionWeights<T> self_attn, image_attn;
  FfnWeights<T> ffn;
  // dual-guidance branches (trainable)
  AttentionWeights<T> guide1, guide2;
};

/// Two hidden SiLU layers; the output layer produces [g1 | g2].
template <class T>
struct GateWeights {
  Matrix<T> w1;
  std::vector<T> b1;
  Matrix<T> w2;
  std::vector<T> b2;
  Matrix<T> w3;
  std::vector<T> b3;
};

enum class ParamGroup : int { Backbone = 0, Guide1 = 1, Guide2 = 2, Gate = 3 };
constexpr int kParamGroups = 4;
const char* group_name(ParamGroup g);

template <class T>
struct ModelWeights {
  ModelConfig config;
  Matrix<T> time_proj;  // t_embed_dim x d_model, added to every token
  std::vector<LayerWeights<T>> layers;
  NormWeights<T> out_norm;
  Matrix<T> out_proj;
  GateWeights<T> gate;
  std::array<bool, kParamGroups> frozen{true, false, false, false};

  bool is_frozen(ParamGroup g) const { return frozen[static_cast<int>(g)]; }
};

/// Calls fn(group, name, span) for every parameter tensor in a fixed order.
template <class T, class Fn>
void for_each_param(ModelWeights<T>& w, Fn&& fn);
template <class T, class Fn>
void for_each_param(const ModelWeights<T>& w, Fn&& fn);

/// Random frozen backbone and guidance branches, zero-initialized gate output
/// layer. Deterministic in seed.
template <class T>
ModelWeights<T> init_weights(const ModelConfig& config, std::uint64_t seed);

/// Same shapes, every value zero (gradient and optimizer buffers).
template <class T>
ModelWeights<T> zeros_like(const ModelWeights<T>& w);

template <class To, class From>
ModelWeights<To> cast_weights(const ModelWeights<From>& w);

/// FNV-1a over the float64 image of every frozen parameter.
std::uint64_t frozen_hash(const ModelWeights<float>& w);
std::uint64_t frozen_hash(const ModelWeights<double>& w);

/// [cos(1000 t f_k), sin(1000 t f_k)] with f_k = 10000^(-k / (width/2)).
std::vector<double> timestep_embedding(double t, int width);

template <class T>
struct GatePair {
  std::vector<T> g1, g2;  // per channel, length d_model
};

template <class T>
GatePair<T> gate(const GateWeights<T>& w, std::span<const double> t_embedding);

template <class T>
struct BackboneOutput {
  Matrix<T> output;
  std::vector<Matrix<T>> features;  // one per layer
};

/// Frozen backbone. Layer features are the normalized residual stream right
/// after the self-attention merge.
template <class T>
BackboneOutput<T> backbone_forward(const ModelWeights<T>& w, const Matrix<T>& tokens, double t,
                                   const Matrix<T>& condition);

template <class T>
struct FeatureSets {
  std::vector<Matrix<T>> f1;  // structural: source at t1 under an empty condition
  std::vector<Matrix<T>> f2;  // transition: source at t2 under the target condition
};

struct FeatureTimes {
  double t1 = 0.05;
  double t2 = 0.95;
};

/// Requires 0 <= t1 <= t2 <= 1.
template <class T>
FeatureSets<T> extract_features(const ModelWeights<T>& w, const Matrix<T>& source_tokens,
                                const Matrix<T>& target_condition, const Matrix<T>& empty_condition,
                                FeatureTimes times = {});

/// One frozen backbone layer.
template <class T>
Matrix<T> backbone_block_forward(const LayerWeights<T>& lw, const Matrix<T>& x, const Matrix<T>& condition,
                                 int n_heads);

/// One dual-guidance layer: h = SelfAttn(n) + g1 * Guide1(n, f1) + g2 * Guide2(n, f2)
/// with n = Norm(x), followed by the frozen image attention and FFN.
template <class T>
Matrix<T> dual_block_forward(const LayerWeights<T>& lw, const Matrix<T>& x, const Matrix<T>& f1,
                             const Matrix<T>& f2, const GatePair<T>& gates, const Matrix<T>& condition,
                             int n_heads);

/// Full editing model: velocity prediction for noisy tokens at time t.
template <class T>
Matrix<T> edit_forward(const ModelWeights<T>& w, const Matrix<T>& tokens, double t, const Matrix<T>& condition,
                       const FeatureSets<T>& features);

/// Per-head softmax attention matrices [query tokens x key tokens].
template <class T>
std::vector<Matrix<T>> attention_probabilities(const AttentionWeights<T>& w, const Matrix<T>& xq,
                                               const Matrix<T>& xkv, int n_heads);

template <class T>
struct TrainSample {
  Matrix<T> x0, eps;
  double t = 0.5;
  Matrix<T> condition;
  FeatureSets<T> features;
};

/// CFM loss of one sample and (optionally) its gradient over every trainable
/// parameter group; frozen groups get no gradient.
template <class T>
double loss_and_grad(const ModelWeights<T>& w, const TrainSample<T>& sample, ModelWeights<T>* grad);

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <class T>
struct OptimizerState {
  ModelWeights<T> m, v;
  long step = 0;
};

template <class T>
OptimizerState<T> make_optimizer(const ModelWeights<T>& w);

/// One AdamW step on the batch-mean CFM loss over trainable groups. Returns
/// the loss before the update. Throws NonFinite for a non-finite loss.
template <class T>
double train_step(ModelWeights<T>& w, std::span<const TrainSample<T>> batch, OptimizerState<T>& state,
                  const AdamConfig& cfg);

template <class T>
double batch_loss(const ModelWeights<T>& w, std::span<const TrainSample<T>> batch);

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::array<double, kParamGroups> group_max{};
  std::array<std::size_t, kParamGroups> group_checked{};
};

/// Central finite differences against an analytic gradient on sampled
/// coordinates of `params`. Relative error is |a - n| / max(|a|, |n|, floor).
double finite_difference_check(const std::function<double()>& loss, std::span<double> params,
                               std::span<const double> analytic, std::span<const std::size_t> coords, double eps,
                               double floor = 1e-6);

/// Checks every trainable group of a float64 model on one sample. Frozen
/// groups are excluded.
GradCheckResult grad_check(ModelWeights<double>& w, const TrainSample<double>& sample, double eps,
                           std::size_t coords_per_tensor, std::uint64_t seed);

/// Synthetic editing pairs: random source tokens, a structured edit as the
/// clean target, Gaussian noise, random t and condition, features from the
/// frozen backbone.
template <class T>
std::vector<TrainSample<T>> make_toy_dataset(const ModelWeights<T>& w, int n_samples, std::uint64_t seed);

/// One EVK0 file per parameter tensor plus index.json.
void save_checkpoint(const std::filesystem::path& dir, const ModelWeights<float>& w);
ModelWeights<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace evk::editformer

#include "evk/editformer_params.inl"
