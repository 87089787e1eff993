#pragma once

#include "ctxsafe/agent.hpp"
#include "ctxsafe/constraints.hpp"
#include "ctxsafe/context_model.hpp"
#include "ctxsafe/env_merge.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace ctxsafe
{

class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct ContextParams
{
  int horizon = 5;
  double self_prior = 3.0;
  double default_cap = 0.25;
  int recovery_window = 20;
  double epsilon = 1e-6;
  int history_capacity = 64;
  /// Detector perturbation probability per true noise level.
  std::array<double, 3> detect_noise = {0.0, 0.03, 0.08};
  std::array<double, 3> weights = {1.0, 1.0, 1.0};

  DiscrepancyWeights discrepancy_weights() const { return {weights[0], weights[1], weights[2]}; }
};

struct AgentParams
{
  double lr = 0.37;
  double gamma = 0.939;
  double q_init = 0.0;
  double eps_start = 1.0;
  double eps_end = 0.05;
  int eps_decay_episodes = 200;
  double eps_eval = 0.0;
  double lambda = 5.0;
  HeuristicParams heuristic;

  EpsilonSchedule schedule() const { return {eps_start, eps_end, eps_decay_episodes}; }
};

struct HarnessParams
{
  double budget = 5.0;
  int train_episodes = 300;
  std::uint64_t base_seed = 0;
  /// Context whose table entry the fixed-constraint baseline freezes.
  std::array<int, 3> fixed_context = {1, 1, 1};
};

struct Config
{
  EnvParams env;
  Thresholds cb_base;
  double cb_scale = 0.93;
  ConstraintParams constraint;
  ContextParams context;
  AgentParams agent;
  HarnessParams harness;

  ThresholdTable threshold_table() const { return ThresholdTable::generate(cb_base, cb_scale); }
  Context fixed_context() const
  {
    return Context{harness.fixed_context[0], harness.fixed_context[1], harness.fixed_context[2]};
  }
  void validate() const;
};

/// Applies a JSON document on top of the defaults. Keys may be nested objects
/// or dotted paths ("phi.alpha"); unknown keys raise ConfigError.
Config config_from_json(const nlohmann::json & doc, Config base = {});
Config load_config(const std::filesystem::path & path);

/// Every key with its resolved value, as a nested document.
nlohmann::ordered_json config_to_json(const Config & config);

}  // namespace ctxsafe
