#include "ctxsafe/shield.hpp"

#include <string>

namespace ctxsafe
{

const std::vector<Action> & default_fallback_order()
{
  static const std::vector<Action> order = {
    Action::kSlower, Action::kIdle, Action::kLaneLeft, Action::kLaneRight, Action::kFaster};
  return order;
}

ShieldDecision filter(Action proposed, ActionEvals evals, const std::vector<Action> & fallback_order)
{
  for (Action a : kAllActions) {
    if (!evals.contains(a)) {
      throw ShieldConfigError("missing constraint evaluation for " + std::string(action_name(a)));
    }
  }
  if (fallback_order.empty()) throw ShieldConfigError("fallback order is empty");

  ShieldDecision d;
  d.proposed = proposed;
  d.executed = proposed;
  if (!evals.at(proposed).admissible) {
    d.executed = fallback_order.front();
    d.infeasible = true;
    for (Action a : fallback_order) {
      if (evals.at(a).admissible) {
        d.executed = a;
        d.infeasible = false;
        break;
      }
    }
  }
  d.intervened = d.executed != d.proposed;
  d.evals = std::move(evals);
  return d;
}

SafetyBudget charge_budget(SafetyBudget budget, double realized_cost)
{
  if (!(realized_cost >= 0.0)) throw std::invalid_argument("realized cost must be nonnegative");
  budget.spent += realized_cost;
  return budget;
}

}  // namespace ctxsafe
