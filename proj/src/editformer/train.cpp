#include <cmath>
#include <fstream>
#include <map>
#include <vector>

#include <json.hpp>

#include "evk/editformer.hpp"
#include "evk/error.hpp"
#include "evk/reduce.hpp"
#include "evk/rng.hpp"
#include "evk/tensor.hpp"
#include "ops.hpp"

namespace evk::editformer {

namespace {

template <class T>
struct Slot {
  ParamGroup group;
  std::span<T> values;
};

template <class T>
std::vector<Slot<T>> slots(ModelWeights<T>& w) {
  std::vector<Slot<T>> out;
  for_each_param(w, [&](ParamGroup g, const std::string&, std::span<T> s) { out.push_back({g, s}); });
  return out;
}

}  // namespace

template <class T>
double loss_and_grad(const ModelWeights<T>& w, const TrainSample<T>& s, ModelWeights<T>* grad) {
  if (s.x0.rows != s.eps.rows || s.x0.cols != s.eps.cols)
    throw Error(ErrorKind::ShapeMismatch, "x0 and eps differ in shape");
  Matrix<T> xt(s.x0.rows, s.x0.cols);
  for (std::size_t i = 0; i < xt.v.size(); ++i)
    xt.v[i] = static_cast<T>((1.0 - s.t) * s.x0.v[i] + s.t * s.eps.v[i]);

  detail::ModelCache<T> cache;
  const Matrix<T> pred = detail::edit_forward_cached<T>(w, xt, s.t, s.condition, s.features, grad ? &cache : nullptr);

  const std::size_t n = pred.v.size();
  std::vector<double> sq(n);
  Matrix<T> dpred(pred.rows, pred.cols);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(pred.v[i]) - (static_cast<double>(s.eps.v[i]) - s.x0.v[i]);
    sq[i] = r * r;
    dpred.v[i] = static_cast<T>(2.0 * r / static_cast<double>(n));
  }
  const double loss = pairwise_sum(sq) / static_cast<double>(n);
  if (!grad) return loss;

  const bool need_guides = !w.is_frozen(ParamGroup::Guide1) || !w.is_frozen(ParamGroup::Guide2);
  const bool need_gate = !w.is_frozen(ParamGroup::Gate);
  if (!need_guides && !need_gate) return loss;

  const int D = w.config.d_model;
  Matrix<T> dx = detail::ln_backward(detail::matmul_a_bt(dpred, w.out_proj), cache.head.ln, w.out_norm);
  std::vector<T> dg1(D, T(0)), dg2(D, T(0));
  ModelWeights<T> layer_grads = zeros_like(w);
  for (int i = w.config.n_layers - 1; i >= 0; --i)
    dx = detail::layer_backward(w.layers[i], cache.layers[i], dx, w.config.n_heads, cache.gates, dg1, dg2,
                                &layer_grads.layers[i]);
  for (int i = 0; i < w.config.n_layers; ++i) {
    if (!w.is_frozen(ParamGroup::Guide1)) grad->layers[i].guide1 = layer_grads.layers[i].guide1;
    if (!w.is_frozen(ParamGroup::Guide2)) grad->layers[i].guide2 = layer_grads.layers[i].guide2;
  }
  if (need_gate) detail::gate_backward(w.gate, cache.gate, dg1, dg2, grad->gate);
  return loss;
}

template <class T>
double batch_loss(const ModelWeights<T>& w, std::span<const TrainSample<T>> batch) {
  if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "empty batch");
  std::vector<double> losses(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) losses[i] = loss_and_grad<T>(w, batch[i], nullptr);
  return pairwise_sum(losses) / static_cast<double>(batch.size());
}

template <class T>
OptimizerState<T> make_optimizer(const ModelWeights<T>& w) {
  return {zeros_like(w), zeros_like(w), 0};
}

template <class T>
double train_step(ModelWeights<T>& w, std::span<const TrainSample<T>> batch, OptimizerState<T>& state,
                  const AdamConfig& cfg) {
  if (batch.empty()) throw Error(ErrorKind::InvalidArgument, "empty batch");
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<ModelWeights<T>> grads(batch.size());
  std::vector<double> losses(batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    grads[i] = zeros_like(w);
    losses[i] = loss_and_grad<T>(w, batch[i], &grads[i]);
  }
  const double loss = pairwise_sum(losses) / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw Error(ErrorKind::NonFinite, "training loss is not finite");

  // Sum per-sample gradients in sample order so the step is thread-count independent.
  ModelWeights<T> total = zeros_like(w);
  auto tot = slots(total);
  for (auto& g : grads) {
    auto gs = slots(g);
    for (std::size_t k = 0; k < tot.size(); ++k)
      for (std::size_t j = 0; j < tot[k].values.size(); ++j) tot[k].values[j] += gs[k].values[j];
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto ps = slots(w), ms = slots(state.m), vs = slots(state.v);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (w.is_frozen(ps[k].group)) continue;
    for (std::size_t j = 0; j < ps[k].values.size(); ++j) {
      const double g = static_cast<double>(tot[k].values[j]) / static_cast<double>(batch.size());
      const double m = cfg.beta1 * ms[k].values[j] + (1 - cfg.beta1) * g;
      const double v = cfg.beta2 * vs[k].values[j] + (1 - cfg.beta2) * g * g;
      ms[k].values[j] = static_cast<T>(m);
      vs[k].values[j] = static_cast<T>(v);
      const double p = ps[k].values[j];
      const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.eps) + cfg.weight_decay * p;
      ps[k].values[j] = static_cast<T>(p - cfg.lr * update);
    }
  }
  return loss;
}

double finite_difference_check(const std::function<double()>& loss, std::span<double> params,
                               std::span<const double> analytic, std::span<const std::size_t> coords, double eps,
                               double floor) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw Error(ErrorKind::InvalidArgument, "grad_check eps must be in [1e-6, 1e-3]");
  if (params.size() != analytic.size()) throw Error(ErrorKind::DimMismatch, "gradient length differs from parameters");
  double worst = 0;
  for (std::size_t idx : coords) {
    if (idx >= params.size()) throw Error(ErrorKind::InvalidArgument, "coordinate out of range");
    const double saved = params[idx];
    params[idx] = saved + eps;
    const double lp = loss();
    params[idx] = saved - eps;
    const double lm = loss();
    params[idx] = saved;
    if (!std::isfinite(lp) || !std::isfinite(lm)) throw Error(ErrorKind::NonFinite, "loss is not finite near the point");
    const double numeric = (lp - lm) / (2 * eps);
    const double a = analytic[idx];
    if (!std::isfinite(a)) throw Error(ErrorKind::NonFinite, "analytic gradient is not finite");
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

GradCheckResult grad_check(ModelWeights<double>& w, const TrainSample<double>& sample, double eps,
                           std::size_t coords_per_tensor, std::uint64_t seed) {
  ModelWeights<double> grad = zeros_like(w);
  loss_and_grad<double>(w, sample, &grad);
  auto ps = slots(w);
  auto gs = slots(grad);
  const std::function<double()> loss = [&] { return loss_and_grad<double>(w, sample, nullptr); };
  Rng rng(seed);
  GradCheckResult res;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto g = ps[k].group;
    if (w.is_frozen(g)) continue;
    const std::size_t n = ps[k].values.size();
    std::vector<std::size_t> coords;
    if (n <= coords_per_tensor) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < coords_per_tensor; ++i) coords.push_back(uniform_index(rng, n));
    }
    const double err = finite_difference_check(loss, ps[k].values, gs[k].values, coords, eps);
    const int gi = static_cast<int>(g);
    res.group_max[gi] = std::max(res.group_max[gi], err);
    res.group_checked[gi] += coords.size();
    res.max_rel_error = std::max(res.max_rel_error, err);
    res.checked += coords.size();
  }
  return res;
}

template <class T>
std::vector<TrainSample<T>> make_toy_dataset(const ModelWeights<T>& w, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw Error(ErrorKind::InvalidArgument, "dataset needs at least one sample");
  const auto& c = w.config;
  std::vector<TrainSample<T>> out;
  const Matrix<T> empty(c.cond_len, c.cond_dim);
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    auto draw = [&](int r, int cols) {
      Matrix<T> m(r, cols);
      for (auto& x : m.v) x = static_cast<T>(normal(rng));
      return m;
    };
    Matrix<T> src = draw(c.seq_len, c.d_model);
    Matrix<T> cond = draw(c.cond_len, c.cond_dim);
    // The edit: the first half of the tokens move along a direction read
    // off the condition, the rest stays.
    Matrix<T> x0 = src;
    for (int r = 0; r < (c.seq_len + 1) / 2; ++r)
      for (int d = 0; d < c.d_model; ++d) x0(r, d) += cond(0, d % c.cond_dim);
    TrainSample<T> ts;
    ts.eps = draw(c.seq_len, c.d_model);
    ts.t = uniform(rng, 0.1, 0.9);
    ts.features = extract_features(w, src, cond, empty);
    ts.x0 = std::move(x0);
    ts.condition = std::move(cond);
    out.push_back(std::move(ts));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& dir, const ModelWeights<float>& w) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  const auto& c = w.config;
  index["format"] = "evk-editformer";
  index["config"] = {{"d_model", c.d_model},     {"n_heads", c.n_heads},   {"n_layers", c.n_layers},
                     {"d_ff", c.d_ff},           {"seq_len", c.seq_len},   {"cond_len", c.cond_len},
                     {"cond_dim", c.cond_dim},   {"t_embed_dim", c.t_embed_dim}, {"gate_hidden", c.gate_hidden}};
  for (int g = 0; g < kParamGroups; ++g) index["frozen"][group_name(static_cast<ParamGroup>(g))] = w.frozen[g];
  index["tensors"] = nlohmann::json::array();
  for_each_param(w, [&](ParamGroup g, const std::string& name, std::span<const float> s) {
    const std::string file = name + ".evk";
    write_tensor(dir / file, TensorBlob({s.size()}, std::vector<float>(s.begin(), s.end())));
    index["tensors"].push_back({{"name", name}, {"group", group_name(g)}, {"file", file}, {"size", s.size()}});
  });
  std::ofstream out(dir / "index.json");
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + (dir / "index.json").string());
  out << index.dump(2) << "\n";
}

ModelWeights<float> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + (dir / "index.json").string());
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("checkpoint index: ") + e.what());
  }
  ModelConfig c;
  try {
    const auto& j = index.at("config");
    c.d_model = j.at("d_model");
    c.n_heads = j.at("n_heads");
    c.n_layers = j.at("n_layers");
    c.d_ff = j.at("d_ff");
    c.seq_len = j.at("seq_len");
    c.cond_len = j.at("cond_len");
    c.cond_dim = j.at("cond_dim");
    c.t_embed_dim = j.at("t_embed_dim");
    c.gate_hidden = j.at("gate_hidden");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("checkpoint config: ") + e.what());
  }
  ModelWeights<float> w = init_weights<float>(c, 0);
  for (int g = 0; g < kParamGroups; ++g) {
    const char* name = group_name(static_cast<ParamGroup>(g));
    if (index.contains("frozen") && index["frozen"].contains(name)) w.frozen[g] = index["frozen"][name].get<bool>();
  }
  std::map<std::string, std::string> files;
  for (const auto& t : index.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();
  for_each_param(w, [&](ParamGroup, const std::string& name, std::span<float> s) {
    const auto it = files.find(name);
    if (it == files.end()) throw Error(ErrorKind::MissingArtifact, "checkpoint lacks tensor " + name);
    const TensorBlob b = read_tensor(dir / it->second);
    if (b.data.size() != s.size()) throw Error(ErrorKind::ShapeMismatch, "tensor " + name + " has the wrong size");
    std::copy(b.data.begin(), b.data.end(), s.begin());
  });
  return w;
}

template double loss_and_grad<float>(const ModelWeights<float>&, const TrainSample<float>&, ModelWeights<float>*);
template double loss_and_grad<double>(const ModelWeights<double>&, const TrainSample<double>&,
                                      ModelWeights<double>*);
template double batch_loss<float>(const ModelWeights<float>&, std::span<const TrainSample<float>>);
template double batch_loss<double>(const ModelWeights<double>&, std::span<const TrainSample<double>>);
template OptimizerState<float> make_optimizer<float>(const ModelWeights<float>&);
template OptimizerState<double> make_optimizer<double>(const ModelWeights<double>&);
template double train_step<float>(ModelWeights<float>&, std::span<const TrainSample<float>>, OptimizerState<float>&,
                                  const AdamConfig&);
template double train_step<double>(ModelWeights<double>&, std::span<const TrainSample<double>>,
                                   OptimizerState<double>&, const AdamConfig&);
template std::vector<TrainSample<float>> make_toy_dataset<float>(const ModelWeights<float>&, int, std::uint64_t);
template std::vector<TrainSample<double>> make_toy_dataset<double>(const ModelWeights<double>&, int, std::uint64_t);

}  // namespace evk::editformer
