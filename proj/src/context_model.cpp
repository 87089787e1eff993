#include "ctxsafe/context_model.hpp"

#include "ctxsafe/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctxsafe
{

InteractionHistory::InteractionHistory(std::size_t capacity) : capacity_(capacity)
{
  if (capacity_ == 0) throw std::invalid_argument("history capacity must be positive");
}

void InteractionHistory::push(const HistoryRecord & record)
{
  records_.push_back(record);
  while (records_.size() > capacity_) records_.pop_front();
}

int InteractionHistory::recent_violations(std::size_t window) const
{
  const std::size_t n = std::min(window, records_.size());
  return static_cast<int>(std::count_if(
    records_.end() - static_cast<std::ptrdiff_t>(n), records_.end(),
    [](const HistoryRecord & r) { return r.violation; }));
}

Context detect_context(
  const InteractionHistory & history, const Context & true_context, double noise_prob, Rng & rng)
{
  if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) {
    throw std::invalid_argument("noise_prob must lie in [0, 1]");
  }
  // The draw happens unconditionally so the random stream does not depend on
  // the history contents.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool perturb = unit(rng) < noise_prob;
  if (!perturb || history.recent_violations(5) >= 2) return true_context;

  std::array<Context, 6> neighbors{};
  int n = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int delta : {-1, 1}) {
      Context c = true_context;
      int & field = axis == 0 ? c.density : (axis == 1 ? c.behavior : c.noise);
      field += delta;
      if (c.valid()) neighbors[n++] = c;
    }
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  return neighbors[pick(rng)];
}

TransitionModel::TransitionModel(double self_prior) : self_prior_(self_prior)
{
  if (!(self_prior_ >= 0.0)) throw std::invalid_argument("self_prior must be nonnegative");
}

void TransitionModel::update(const Context & prev, const Context & next)
{
  ++counts_[prev.index()][next.index()];
  ++row_totals_[prev.index()];
}

std::uint64_t TransitionModel::count(const Context & src, const Context & dst) const
{
  return counts_[src.index()][dst.index()];
}

std::uint64_t TransitionModel::row_total(const Context & src) const
{
  return row_totals_[src.index()];
}

double TransitionModel::probability(const Context & src, const Context & dst) const
{
  const double mass = static_cast<double>(row_totals_[src.index()]) + self_prior_;
  if (mass <= 0.0) return src == dst ? 1.0 : 0.0;
  const double self = src == dst ? self_prior_ : 0.0;
  return (static_cast<double>(counts_[src.index()][dst.index()]) + self) / mass;
}

Context TransitionModel::most_likely_next(const Context & src) const
{
  const double mass = static_cast<double>(row_totals_[src.index()]) + self_prior_;
  if (mass <= 0.0) return src;
  // Compare unnormalized weights; the shared denominator does not change the argmax.
  int best = 0;
  double best_weight = -1.0;
  const auto & row = counts_[src.index()];
  for (int dst = 0; dst < kNumContexts; ++dst) {
    const double w =
      static_cast<double>(row[dst]) + (dst == src.index() ? self_prior_ : 0.0);
    if (w > best_weight) {
      best_weight = w;
      best = dst;
    }
  }
  return Context::from_index(best);
}

TransitionModel update_transition_counts(TransitionModel model, const Context & prev, const Context & next)
{
  model.update(prev, next);
  return model;
}

ContextForecast predict_context(const TransitionModel & model, const Context & current, int horizon)
{
  if (horizon < 1) throw std::invalid_argument("forecast horizon must be >= 1");
  ContextForecast out;
  out.horizon = horizon;
  out.sequence.reserve(static_cast<std::size_t>(horizon));
  Context c = current;
  for (int k = 0; k < horizon; ++k) {
    c = model.most_likely_next(c);
    out.sequence.push_back(c);
  }
  out.risk = risk_level(out);
  return out;
}

double context_discrepancy(const Context & a, const Context & b, const DiscrepancyWeights & w)
{
  return w.density * std::abs(a.density - b.density) +
         w.behavior * std::abs(a.behavior - b.behavior) + w.noise * std::abs(a.noise - b.noise);
}

double required_speed(const ContextForecast & forecast, const Context & current, const DiscrepancyWeights & w)
{
  if (forecast.horizon < 1 || forecast.sequence.empty()) {
    throw std::invalid_argument("forecast horizon must be >= 1");
  }
  return context_discrepancy(forecast.sequence.back(), current, w) / forecast.horizon;
}

double adaptation_ratio(double v_req, double v_cap, double epsilon)
{
  if (!(v_cap > 0.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("adaptation_ratio needs v_cap > 0 and epsilon > 0");
  }
  return v_req / (v_cap + epsilon);
}

AdaptationState::AdaptationState(double default_cap, std::size_t window, double epsilon)
: default_cap_(default_cap), window_(window), epsilon_(epsilon), v_cap_(default_cap)
{
  if (!(default_cap_ > 0.0)) throw std::invalid_argument("default_cap must be positive");
  if (window_ == 0) throw std::invalid_argument("recovery window must be positive");
  if (!(epsilon_ > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

void AdaptationState::update_capacity(
  double shift_magnitude, int steps_to_recover, bool recovered_without_fallback)
{
  if (!(shift_magnitude >= 0.0)) throw std::invalid_argument("shift magnitude must be nonnegative");
  if (steps_to_recover < 1) throw std::invalid_argument("steps_to_recover must be >= 1");
  if (recovered_without_fallback) {
    recoveries_.push_back({shift_magnitude, steps_to_recover});
    while (recoveries_.size() > window_) recoveries_.pop_front();
  }
  recompute();
}

void AdaptationState::recompute()
{
  double best = 0.0;
  for (const auto & r : recoveries_) best = std::max(best, r.shift / r.steps);
  // A window holding only zero-magnitude shifts carries no evidence.
  v_cap_ = best > 0.0 ? best : default_cap_;
}

void AdaptationState::on_context_shift(double magnitude)
{
  if (magnitude <= 0.0) return;
  pending_shift_ = magnitude;
  pending_steps_ = 0;
}

void AdaptationState::on_step(bool admissible_nonempty, bool fallback_used)
{
  if (pending_shift_ <= 0.0) return;
  ++pending_steps_;
  if (admissible_nonempty && !fallback_used) {
    update_capacity(pending_shift_, pending_steps_, true);
    pending_shift_ = 0.0;
    pending_steps_ = 0;
  }
}

AdaptationState update_capacity(
  AdaptationState state, double shift_magnitude, int steps_to_recover, bool recovered_without_fallback)
{
  state.update_capacity(shift_magnitude, steps_to_recover, recovered_without_fallback);
  return state;
}

}  // namespace ctxsafe
