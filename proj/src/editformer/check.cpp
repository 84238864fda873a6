#include <limits>

#include "evk/editformer_check.hpp"
#include "evk/error.hpp"
#include "evk/rng.hpp"

namespace evk::editformer {

ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "model config must be a JSON object");
  ModelConfig c;
  const std::pair<const char*, int*> fields[] = {
      {"d_model", &c.d_model},   {"n_heads", &c.n_heads},         {"n_layers", &c.n_layers},
      {"d_ff", &c.d_ff},         {"seq_len", &c.seq_len},         {"cond_len", &c.cond_len},
      {"cond_dim", &c.cond_dim}, {"t_embed_dim", &c.t_embed_dim}, {"gate_hidden", &c.gate_hidden},
  };
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const auto& [name, ptr] : fields)
      if (k == name) {
        if (!v.is_number_integer()) throw Error(ErrorKind::InvalidArgument, k + " must be an integer");
        *ptr = v.get<int>();
        known = true;
      }
    if (!known) throw Error(ErrorKind::InvalidArgument, "unknown model config field '" + k + "'");
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},   {"n_heads", c.n_heads},         {"n_layers", c.n_layers},
          {"d_ff", c.d_ff},         {"seq_len", c.seq_len},         {"cond_len", c.cond_len},
          {"cond_dim", c.cond_dim}, {"t_embed_dim", c.t_embed_dim}, {"gate_hidden", c.gate_hidden}};
}

namespace {

Matrix<double> random_matrix(Rng& rng, int r, int c) {
  Matrix<double> m(r, c);
  for (auto& x : m.v) x = normal(rng);
  return m;
}

}  // namespace

GradCheckResult gradient_suite(const ModelConfig& config, std::uint64_t seed, double eps) {
  auto w = init_weights<double>(config, seed);
  Rng rng(3);
  for (auto& x : w.gate.w3.v) x = 0.3 * normal(rng);
  for (auto& x : w.gate.b3) x = 0.3 * normal(rng);
  const auto data = make_toy_dataset<double>(w, 2, 11);
  return grad_check(w, data[0], eps, std::numeric_limits<std::size_t>::max(), 0);
}

CheckReport run_checks(const CheckOptions& o) {
  o.config.validate();
  const ModelConfig& c = o.config;
  CheckReport r;

  {
    const auto w = init_weights<double>(c, o.seed);
    Rng rng(derive_seed(o.seed, 100));
    const Matrix<double> empty(c.cond_len, c.cond_dim);
    r.identity_trials = o.identity_trials;
    for (int i = 0; i < o.identity_trials; ++i) {
      const auto src = random_matrix(rng, c.seq_len, c.d_model);
      const auto x = random_matrix(rng, c.seq_len, c.d_model);
      const auto cond = random_matrix(rng, c.cond_len, c.cond_dim);
      const double t = uniform01(rng);
      const auto feats = extract_features(w, src, cond, empty);
      r.identity_bitwise += edit_forward(w, x, t, cond, feats) == backbone_forward(w, x, t, cond).output;
    }
  }

  r.grad_eps = o.grad_eps;
  r.grad = gradient_suite(c, o.seed, o.grad_eps);
  r.grad_pass = r.grad.max_rel_error < o.grad_tolerance;

  {
    auto w = init_weights<float>(c, o.seed);
    const auto data = make_toy_dataset<float>(w, o.overfit_samples, derive_seed(o.seed, 200));
    const std::uint64_t before = frozen_hash(w);
    auto opt = make_optimizer(w);
    r.initial_loss = batch_loss(w, std::span<const TrainSample<float>>(data));
    for (int s = 0; s < o.overfit_steps; ++s) train_step(w, std::span<const TrainSample<float>>(data), opt, o.adam);
    r.final_loss = batch_loss(w, std::span<const TrainSample<float>>(data));
    r.overfit_steps = o.overfit_steps;
    r.loss_ratio = r.final_loss / r.initial_loss;
    r.frozen_unchanged = frozen_hash(w) == before;
    r.overfit_pass = r.frozen_unchanged && r.loss_ratio < o.overfit_target;
  }
  return r;
}

nlohmann::json to_json(const CheckReport& r) {
  nlohmann::json groups = nlohmann::json::object();
  for (int g = 0; g < kParamGroups; ++g)
    if (r.grad.group_checked[g])
      groups[group_name(static_cast<ParamGroup>(g))] = {{"max_rel_error", r.grad.group_max[g]},
                                                        {"checked", r.grad.group_checked[g]}};
  return {{"gate_zero_identity",
           {{"trials", r.identity_trials}, {"bitwise_equal", r.identity_bitwise}, {"pass", r.identity_pass()}}},
          {"grad_check",
           {{"eps", r.grad_eps},
            {"max_rel_error", r.grad.max_rel_error},
            {"checked", r.grad.checked},
            {"groups", groups},
            {"pass", r.grad_pass}}},
          {"overfit",
           {{"steps", r.overfit_steps},
            {"initial_loss", r.initial_loss},
            {"final_loss", r.final_loss},
            {"ratio", r.loss_ratio},
            {"frozen_unchanged", r.frozen_unchanged},
            {"pass", r.overfit_pass}}},
          {"pass", r.all_pass()}};
}

}  // namespace evk::editformer
