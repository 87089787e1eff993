#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace ctxsafe
{

/// Discrete meta-actions of the merge task. LANE_LEFT moves toward higher lane
/// indices (away from the ramp), LANE_RIGHT toward lower ones.
enum class Action : int { kLaneLeft = 0, kIdle = 1, kLaneRight = 2, kFaster = 3, kSlower = 4 };

inline constexpr int kNumActions = 5;

inline constexpr std::array<Action, kNumActions> kAllActions = {
  Action::kLaneLeft, Action::kIdle, Action::kLaneRight, Action::kFaster, Action::kSlower};

constexpr int to_index(Action a) { return static_cast<int>(a); }

constexpr bool is_lane_change(Action a) { return a == Action::kLaneLeft || a == Action::kLaneRight; }

std::string_view action_name(Action a);
std::optional<Action> parse_action(std::string_view name);

/// Throws std::invalid_argument for ids outside [0, 5).
Action action_from_index(int index);

}  // namespace ctxsafe
