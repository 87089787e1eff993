#pragma once

#include "ctxsafe/action.hpp"
#include "ctxsafe/context.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>

namespace ctxsafe
{

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Interaction history

struct HistoryRecord
{
  int time_step = 0;
  double front_gap = 0.0;  // observed, meters
  double speed = 0.0;      // observed, m/s
  Action action = Action::kIdle;
  double reward = 0.0;
  double cost = 0.0;
  Context observed_context;
  bool fallback = false;
  bool violation = false;
};

/// Bounded, time-ordered record of recent interaction steps.
class InteractionHistory
{
public:
  explicit InteractionHistory(std::size_t capacity = 64);

  void push(const HistoryRecord & record);
  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return records_.empty(); }
  void clear() { records_.clear(); }

  /// Number of violation flags among the last `window` records.
  int recent_violations(std::size_t window) const;

  const std::deque<HistoryRecord> & records() const { return records_; }

private:
  std::size_t capacity_;
  std::deque<HistoryRecord> records_;
};

/// Estimates the current context. With probability `noise_prob` one field of
/// the true context is moved by one level (only in-range moves are drawn);
/// two or more violations in the last five records force the true context.
Context detect_context(
  const InteractionHistory & history, const Context & true_context, double noise_prob, Rng & rng);

// ---------------------------------------------------------------------------
// Transition model

/// Empirical 27x27 context transition counts with a self-transition
/// pseudo-count. Smoothed probability of src -> dst is
/// (counts[src][dst] + prior * [src == dst]) / (row_total + prior).
class TransitionModel
{
public:
  explicit TransitionModel(double self_prior = 3.0);

  void update(const Context & prev, const Context & next);

  std::uint64_t count(const Context & src, const Context & dst) const;
  std::uint64_t row_total(const Context & src) const;
  double self_prior() const { return self_prior_; }

  /// Smoothed transition probability. A row without mass is a pure self-loop.
  double probability(const Context & src, const Context & dst) const;

  /// argmax_dst probability(src, dst), lowest index on ties.
  Context most_likely_next(const Context & src) const;

private:
  std::array<std::array<std::uint64_t, kNumContexts>, kNumContexts> counts_{};
  std::array<std::uint64_t, kNumContexts> row_totals_{};
  double self_prior_;
};

/// Returns a copy of `model` with one transition recorded.
TransitionModel update_transition_counts(TransitionModel model, const Context & prev, const Context & next);

/// Greedy most-likely rollout of length `horizon` starting after `current`.
/// Throws std::invalid_argument when horizon < 1.
ContextForecast predict_context(const TransitionModel & model, const Context & current, int horizon);

// ---------------------------------------------------------------------------
// Discrepancy and adaptation speed

struct DiscrepancyWeights
{
  double density = 1.0;
  double behavior = 1.0;
  double noise = 1.0;
};

/// Weighted L1 distance between ordinal levels.
double context_discrepancy(const Context & a, const Context & b, const DiscrepancyWeights & w = {});

/// Discrepancy between the last forecast context and `current`, per step.
double required_speed(
  const ContextForecast & forecast, const Context & current, const DiscrepancyWeights & w = {});

double adaptation_ratio(double v_req, double v_cap, double epsilon);

struct RecoveryRecord
{
  double shift = 0.0;
  int steps = 1;
};

/// Achievable adaptation speed estimated from recent recoveries: the largest
/// shift/steps ratio among the last W recoveries that completed without
/// fallback, or `default_cap` when none are recorded.
class AdaptationState
{
public:
  AdaptationState(double default_cap = 0.25, std::size_t window = 20, double epsilon = 1e-6);

  /// Records a completed recovery. Ignored when the recovery needed fallback.
  void update_capacity(double shift_magnitude, int steps_to_recover, bool recovered_without_fallback);

  double v_cap() const { return v_cap_; }
  double epsilon() const { return epsilon_; }
  double default_cap() const { return default_cap_; }
  std::size_t window_size() const { return window_; }
  const std::deque<RecoveryRecord> & recoveries() const { return recoveries_; }

  // Step-level bookkeeping. A shift opens a recovery; it closes on the first
  // step whose admissible set is non-empty and that ran without fallback.
  void on_context_shift(double magnitude);
  void on_step(bool admissible_nonempty, bool fallback_used);
  bool recovering() const { return pending_shift_ > 0.0; }

private:
  void recompute();

  double default_cap_;
  std::size_t window_;
  double epsilon_;
  double v_cap_;
  std::deque<RecoveryRecord> recoveries_;
  double pending_shift_ = 0.0;
  int pending_steps_ = 0;
};

AdaptationState update_capacity(
  AdaptationState state, double shift_magnitude, int steps_to_recover, bool recovered_without_fallback);

}  // namespace ctxsafe
