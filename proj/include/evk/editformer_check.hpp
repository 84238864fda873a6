#pragma once

#include <cstdint>

#include <json.hpp>

#include "evk/editformer.hpp"

namespace evk::editformer {

ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& c);

struct CheckOptions {
  ModelConfig config;
  std::uint64_t seed = 7;
  int identity_trials = 100;
  double grad_eps = 1e-5;
  double grad_tolerance = 1e-4;
  int overfit_samples = 16;
  int overfit_steps = 200;
  double overfit_target = 0.10;  // final / initial loss must fall below this
  AdamConfig adam;
};

struct CheckReport {
  int identity_trials = 0;
  int identity_bitwise = 0;  // trials where edit_forward == backbone output bit for bit

  GradCheckResult grad;
  double grad_eps = 0;
  bool grad_pass = false;

  double initial_loss = 0, final_loss = 0, loss_ratio = 0;
  int overfit_steps = 0;
  bool frozen_unchanged = false;
  bool overfit_pass = false;

  bool identity_pass() const { return identity_bitwise == identity_trials; }
  bool all_pass() const { return identity_pass() && grad_pass && overfit_pass; }
};

/// Gate-zero identity on random inputs, finite-difference gradient check in
/// float64, and a short overfitting run on the toy dataset in float32.
CheckReport run_checks(const CheckOptions& options);

/// The gradient check alone. The gate's output layer is perturbed first:
/// at its zero initialization every guidance gradient vanishes and the check
/// would compare zeros.
GradCheckResult gradient_suite(const ModelConfig& config, std::uint64_t seed, double eps);

nlohmann::json to_json(const CheckReport& r);

}  // namespace evk::editformer
