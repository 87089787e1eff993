#include "ctxsafe/constraints.hpp"

#include <algorithm>
#include <stdexcept>

namespace ctxsafe
{

bool dominates(const Thresholds & a, const Thresholds & b)
{
  return a.min_front_gap >= b.min_front_gap && a.min_ttc >= b.min_ttc &&
         a.min_merge_gap >= b.min_merge_gap && a.max_closing_speed <= b.max_closing_speed;
}

ThresholdTable ThresholdTable::generate(const Thresholds & base, double scale)
{
  if (!(scale >= 0.0)) throw std::invalid_argument("threshold scale must be nonnegative");
  ThresholdTable table;
  for (const Context & c : all_contexts()) {
    const double factor = 1.0 + scale * c.level_sum() / 6.0;
    table.entries_[c.index()] = Thresholds{
      base.min_front_gap * factor, base.min_ttc * factor, base.min_merge_gap * factor,
      base.max_closing_speed / factor};
  }
  return table;
}

bool ThresholdTable::is_monotone() const
{
  for (const Context & c : all_contexts()) {
    for (int axis = 0; axis < 3; ++axis) {
      Context up = c;
      int & field = axis == 0 ? up.density : (axis == 1 ? up.behavior : up.noise);
      ++field;
      if (!up.valid()) continue;
      if (!dominates(at(up), at(c))) return false;
    }
  }
  return true;
}

ConstraintEval combine(double g_cb, double g_as, double g_sh, double tau)
{
  ConstraintEval e;
  e.g_cb = g_cb;
  e.g_as = g_as;
  e.g_sh = g_sh;
  e.h = std::max({g_cb, g_as, g_sh});
  e.tau = tau;
  e.admissible = e.h <= 0.0;
  return e;
}

std::string constraint_set_name(std::uint8_t set)
{
  std::string name;
  auto add = [&](std::uint8_t flag, const char * label) {
    if (!(set & flag)) return;
    if (!name.empty()) name += "+";
    name += label;
  };
  add(kCB, "CB");
  add(kAS, "AS");
  add(kSH, "SH");
  return name.empty() ? "none" : name;
}

double risk_level(const ContextForecast & forecast)
{
  if (forecast.sequence.empty()) throw std::invalid_argument("risk_level needs a non-empty forecast");
  double sum = 0.0;
  for (const Context & c : forecast.sequence) sum += c.level_sum() / 6.0;
  return sum / static_cast<double>(forecast.sequence.size());
}

Thresholds effective_thresholds(
  const ThresholdTable & table, const Context & current, const ContextForecast & forecast)
{
  Thresholds out = table.at(current);
  for (const Context & c : forecast.sequence) {
    const Thresholds & t = table.at(c);
    out.min_front_gap = std::max(out.min_front_gap, t.min_front_gap);
    out.min_ttc = std::max(out.min_ttc, t.min_ttc);
    out.min_merge_gap = std::max(out.min_merge_gap, t.min_merge_gap);
    out.max_closing_speed = std::min(out.max_closing_speed, t.max_closing_speed);
  }
  return out;
}

double cb_constraint(const PredictedMargins & m, const Thresholds & t)
{
  const double front = (t.min_front_gap - m.front_gap) / t.min_front_gap;
  const double ttc = (t.min_ttc - m.ttc) / t.min_ttc;
  const double merge = m.merging ? (t.min_merge_gap - m.merge_gap) / t.min_merge_gap : -1.0;
  const double closing =
    (m.closing_speed - t.max_closing_speed) / std::max(t.max_closing_speed, 0.1);
  return std::max({front, ttc, merge, closing});
}

Thresholds tighten_thresholds(const Thresholds & t, double rho, double gamma, double rho_clip)
{
  const double factor = 1.0 + gamma * std::min(std::max(0.0, rho - 1.0), rho_clip);
  return Thresholds{
    t.min_front_gap * factor, t.min_ttc * factor, t.min_merge_gap * factor,
    t.max_closing_speed / factor};
}

double as_constraint(double g_cb_tight, double rho)
{
  return rho > 1.0 ? g_cb_tight : -1.0;
}

double allocate_threshold(
  const SafetyBudget & budget, int remaining_exposure, double risk, double rho, double alpha,
  double beta, double epsilon)
{
  if (remaining_exposure < 1) throw std::invalid_argument("remaining_exposure must be >= 1");
  const double b = budget.remaining();
  if (b <= 0.0) return 0.0;
  const double projection = b / (remaining_exposure + epsilon);
  return projection / (1.0 + alpha * risk + beta * std::max(0.0, rho - 1.0));
}

double sh_constraint(double expected_cost, double tau)
{
  return expected_cost - tau;
}

ConstraintEval StepConstraints::evaluate(const PredictedMargins & margins) const
{
  const double g_cb = (active & kCB) ? cb_constraint(margins, cb) : -1.0;
  const double g_as = (active & kAS) ? as_constraint(cb_constraint(margins, as_tight), rho) : -1.0;
  const double g_sh = (active & kSH) ? sh_constraint(margins.expected_cost, tau) : -1.0;
  ConstraintEval e = combine(g_cb, g_as, g_sh, tau);
  e.expected_cost = margins.expected_cost;
  return e;
}

ConstraintBuilder::ConstraintBuilder(ThresholdTable table, ConstraintParams params, std::uint8_t active)
: table_(std::move(table)), params_(params), active_(active)
{
}

ConstraintBuilder ConstraintBuilder::fixed(
  const ThresholdTable & table, const Context & frozen_context, double frozen_tau)
{
  ConstraintBuilder b(table, ConstraintParams{}, kCB | kSH);
  b.fixed_ = Frozen{table.at(frozen_context), frozen_tau};
  return b;
}

StepConstraints ConstraintBuilder::prepare(const ConstraintInputs & in) const
{
  StepConstraints s;
  s.active = active_;
  if (fixed_) {
    s.cb = fixed_->thresholds;
    s.as_tight = fixed_->thresholds;
    s.tau = fixed_->tau;
    return s;
  }
  if (in.forecast == nullptr) throw std::invalid_argument("adaptive constraints need a forecast");
  s.rho = in.rho;
  s.risk = in.forecast->risk;
  s.cb = effective_thresholds(table_, in.current, *in.forecast);
  s.as_tight = tighten_thresholds(s.cb, in.rho, params_.as_gamma, params_.as_rho_clip);
  s.tau = allocate_threshold(
    in.budget, in.remaining_steps, s.risk, in.rho, params_.alpha, params_.beta, params_.epsilon);
  return s;
}

ConstraintEval evaluate(const StepConstraints & step, const MarginOracle & lookahead)
{
  try {
    return step.evaluate(lookahead());
  } catch (const std::exception &) {
    ConstraintEval e = combine(1.0, 1.0, 1.0, step.tau);
    e.error = true;
    return e;
  }
}

}  // namespace ctxsafe
