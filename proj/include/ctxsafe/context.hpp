#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace ctxsafe
{

inline constexpr int kContextLevels = 3;
inline constexpr int kNumContexts = kContextLevels * kContextLevels * kContextLevels;

/// Safety-relevant operating conditions: traffic density, driver
/// aggressiveness and sensing-noise regime, each an ordinal level in {0,1,2}.
struct Context
{
  int density = 0;
  int behavior = 0;
  int noise = 0;

  constexpr bool valid() const
  {
    return density >= 0 && density < kContextLevels && behavior >= 0 &&
           behavior < kContextLevels && noise >= 0 && noise < kContextLevels;
  }

  /// Row-major index in [0, 27): density * 9 + behavior * 3 + noise.
  constexpr int index() const
  {
    return density * kContextLevels * kContextLevels + behavior * kContextLevels + noise;
  }

  constexpr int level_sum() const { return density + behavior + noise; }

  static Context from_index(int index);

  auto operator<=>(const Context &) const = default;
};

/// All 27 contexts in index order.
std::array<Context, kNumContexts> all_contexts();

std::string to_string(const Context & c);

struct ContextForecast
{
  int horizon = 0;
  /// Predicted contexts for t+1 ... t+horizon.
  std::vector<Context> sequence;
  double risk = 0.0;
};

}  // namespace ctxsafe
