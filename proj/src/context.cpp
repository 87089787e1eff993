#include "ctxsafe/context.hpp"

#include "ctxsafe/action.hpp"

#include <stdexcept>

namespace ctxsafe
{

Context Context::from_index(int index)
{
  if (index < 0 || index >= kNumContexts) {
    throw std::out_of_range("context index out of range: " + std::to_string(index));
  }
  return Context{
    index / (kContextLevels * kContextLevels), (index / kContextLevels) % kContextLevels,
    index % kContextLevels};
}

std::array<Context, kNumContexts> all_contexts()
{
  std::array<Context, kNumContexts> out{};
  for (int i = 0; i < kNumContexts; ++i) out[i] = Context::from_index(i);
  return out;
}

std::string to_string(const Context & c)
{
  return "(" + std::to_string(c.density) + "," + std::to_string(c.behavior) + "," +
         std::to_string(c.noise) + ")";
}

std::string_view action_name(Action a)
{
  switch (a) {
    case Action::kLaneLeft:
      return "LANE_LEFT";
    case Action::kIdle:
      return "IDLE";
    case Action::kLaneRight:
      return "LANE_RIGHT";
    case Action::kFaster:
      return "FASTER";
    case Action::kSlower:
      return "SLOWER";
  }
  return "UNKNOWN";
}

std::optional<Action> parse_action(std::string_view name)
{
  for (Action a : kAllActions) {
    if (action_name(a) == name) return a;
  }
  return std::nullopt;
}

Action action_from_index(int index)
{
  if (index < 0 || index >= kNumActions) {
    throw std::invalid_argument("invalid action id: " + std::to_string(index));
  }
  return static_cast<Action>(index);
}

}  // namespace ctxsafe
