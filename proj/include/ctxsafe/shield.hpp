#pragma once

#include "ctxsafe/action.hpp"
#include "ctxsafe/constraints.hpp"

#include <map>
#include <stdexcept>
#include <vector>

namespace ctxsafe
{

/// Raised when the shield is handed an incomplete evaluation set.
class ShieldConfigError : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

using ActionEvals = std::map<Action, ConstraintEval>;

struct ShieldDecision
{
  Action proposed = Action::kIdle;
  Action executed = Action::kIdle;
  bool intervened = false;
  /// No action was admissible; the head of the fallback order was executed.
  bool infeasible = false;
  ActionEvals evals;
};

/// Conservative-first replacement order: SLOWER, IDLE, LANE_LEFT, LANE_RIGHT, FASTER.
const std::vector<Action> & default_fallback_order();

/// Executes `proposed` if admissible, else the first admissible action in
/// `fallback_order`, else the head of `fallback_order` with infeasible set.
ShieldDecision filter(
  Action proposed, ActionEvals evals,
  const std::vector<Action> & fallback_order = default_fallback_order());

/// Charges a realized cost. Remaining budget may go negative (overrun).
SafetyBudget charge_budget(SafetyBudget budget, double realized_cost);

}  // namespace ctxsafe
