#pragma once

#include "ctxsafe/context.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace ctxsafe
{

/// Driving thresholds for one context. The first three are lower bounds,
/// max_closing_speed is an upper bound.
struct Thresholds
{
  double min_front_gap = 8.0;       // m
  double min_ttc = 1.5;             // s
  double min_merge_gap = 10.0;      // m
  double max_closing_speed = 10.0;  // m/s

  bool operator==(const Thresholds &) const = default;
};

/// True when `a` is at least as conservative as `b` in every field.
bool dominates(const Thresholds & a, const Thresholds & b);

class ThresholdTable
{
public:
  /// Monotone table: min-fields scaled by (1 + scale * level_sum / 6),
  /// max_closing_speed divided by the same factor.
  static ThresholdTable generate(const Thresholds & base, double scale = 0.25);

  const Thresholds & at(const Context & c) const { return entries_[c.index()]; }
  void set(const Context & c, const Thresholds & t) { entries_[c.index()] = t; }

  /// Checks that every single-axis level increase is non-loosening.
  bool is_monotone() const;

private:
  std::array<Thresholds, kNumContexts> entries_{};
};

struct SafetyBudget
{
  double total = 0.0;
  double spent = 0.0;

  double remaining() const { return total - spent; }
  bool overrun() const { return remaining() < 0.0; }

  static SafetyBudget with_total(double d) { return SafetyBudget{d, 0.0}; }
};

/// One-step lookahead summary for a (state, action) pair.
struct PredictedMargins
{
  double front_gap = 1000.0;
  double ttc = 99.0;
  double merge_gap = 1000.0;
  double closing_speed = 0.0;
  double expected_cost = 0.0;
  /// True when the action merges from the ramp inside the merge zone; the
  /// merge-gap requirement only applies then.
  bool merging = false;
};

struct ConstraintEval
{
  double g_cb = -1.0;
  double g_as = -1.0;
  double g_sh = -1.0;
  double h = -1.0;
  double tau = 0.0;
  bool admissible = true;
  double expected_cost = 0.0;
  /// Lookahead failed; the action is treated as inadmissible.
  bool error = false;
};

/// Fills h and admissible from the three constraint values.
ConstraintEval combine(double g_cb, double g_as, double g_sh, double tau);

enum ConstraintFlags : std::uint8_t { kCB = 1, kAS = 2, kSH = 4, kAllConstraints = 7 };

std::string constraint_set_name(std::uint8_t set);

struct ConstraintParams
{
  double alpha = 1.0;
  double beta = 1.0;
  double epsilon = 1e-6;
  double as_gamma = 0.5;
  double as_rho_clip = 4.0;
};

// ---------------------------------------------------------------------------
// Constraint primitives

/// Mean over the forecast of level_sum / 6, in [0, 1].
double risk_level(const ContextForecast & forecast);

/// Field-wise most conservative entry over `current` and every forecast context.
Thresholds effective_thresholds(
  const ThresholdTable & table, const Context & current, const ContextForecast & forecast);

/// Max of normalized deficits; <= 0 iff every margin meets its threshold.
double cb_constraint(const PredictedMargins & m, const Thresholds & t);

/// Inflates min-fields and deflates max_closing_speed by
/// 1 + gamma * min(max(0, rho - 1), rho_clip).
Thresholds tighten_thresholds(const Thresholds & t, double rho, double gamma, double rho_clip);

/// g_cb_tight when rho > 1, otherwise -1 (inactive).
double as_constraint(double g_cb_tight, double rho);

/// tau = B / (N + eps) / (1 + alpha * R + beta * max(0, rho - 1)), floored at 0.
double allocate_threshold(
  const SafetyBudget & budget, int remaining_exposure, double risk, double rho, double alpha,
  double beta, double epsilon);

double sh_constraint(double expected_cost, double tau);

// ---------------------------------------------------------------------------
// Per-step constraint construction

struct ConstraintInputs
{
  Context current;
  const ContextForecast * forecast = nullptr;
  SafetyBudget budget;
  int remaining_steps = 1;
  double rho = 0.0;
};

/// Thresholds and budget allocation fixed for one decision step; evaluating
/// an action only needs its lookahead margins.
struct StepConstraints
{
  std::uint8_t active = kAllConstraints;
  Thresholds cb;
  Thresholds as_tight;
  double rho = 0.0;
  double risk = 0.0;
  double tau = 0.0;

  ConstraintEval evaluate(const PredictedMargins & margins) const;
};

/// Builds per-step constraints. With `fixed` set, thresholds come from a frozen
/// table entry and tau is a constant, independent of forecast and rho.
class ConstraintBuilder
{
public:
  ConstraintBuilder(ThresholdTable table, ConstraintParams params, std::uint8_t active = kAllConstraints);

  static ConstraintBuilder fixed(const ThresholdTable & table, const Context & frozen_context, double frozen_tau);

  StepConstraints prepare(const ConstraintInputs & inputs) const;

  const ThresholdTable & table() const { return table_; }
  const ConstraintParams & params() const { return params_; }
  std::uint8_t active() const { return active_; }
  bool is_fixed() const { return fixed_.has_value(); }

private:
  struct Frozen
  {
    Thresholds thresholds;
    double tau;
  };

  ThresholdTable table_;
  ConstraintParams params_;
  std::uint8_t active_;
  std::optional<Frozen> fixed_;
};

using MarginOracle = std::function<PredictedMargins()>;

/// Evaluates one action. An exception from the oracle yields an inadmissible
/// eval with `error` set.
ConstraintEval evaluate(const StepConstraints & step, const MarginOracle & lookahead);

}  // namespace ctxsafe
