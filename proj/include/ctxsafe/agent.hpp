#pragma once

#include "ctxsafe/action.hpp"
#include "ctxsafe/constraints.hpp"
#include "ctxsafe/context.hpp"
#include "ctxsafe/context_model.hpp"
#include "ctxsafe/env_merge.hpp"

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace ctxsafe
{

inline constexpr int kGapBins = 5;
inline constexpr int kTtcBins = 4;
inline constexpr int kSpeedBins = 4;
inline constexpr int kNumObsKeys = kGapBins * kTtcBins * 2 * kSpeedBins * kNumContexts;

/// Discretized observation plus detected context; 4320 distinct keys.
struct DiscreteObsKey
{
  int gap_bin = 0;    // front gap edges {5, 10, 20, 40} m
  int ttc_bin = 0;    // ttc edges {1, 2, 4} s
  bool merge_zone = false;
  int speed_bin = 0;  // speed edges {10, 20, 30} m/s
  int context = 0;

  int flat() const;
  static DiscreteObsKey from_flat(int flat);
  bool operator==(const DiscreteObsKey &) const = default;
};

DiscreteObsKey discretize(const Observation & obs, const Context & detected);

/// Linear decay from `start` to `end` over `decay_episodes` training episodes.
struct EpsilonSchedule
{
  double start = 1.0;
  double end = 0.05;
  int decay_episodes = 200;

  double at(int episode) const;
};

struct Transition
{
  DiscreteObsKey key;
  Action action = Action::kIdle;
  double reward = 0.0;
  double cost = 0.0;
  ConstraintEval eval;
  DiscreteObsKey next_key;
  bool terminal = false;
};

/// Sum of positive parts of the three constraint values.
double safety_loss(const ConstraintEval & eval);

class QFunction
{
public:
  /// Every entry starts at `initial_value`.
  QFunction(double learning_rate = 0.2, double discount = 0.95, double initial_value = 0.0);

  double value(const DiscreteObsKey & key, Action a) const;
  void set_value(const DiscreteObsKey & key, Action a, double v);
  const std::array<double, kNumActions> & row(const DiscreteObsKey & key) const;

  /// argmax with the lowest action index winning ties.
  Action greedy(const DiscreteObsKey & key) const;

  /// Epsilon-greedy. Always consumes one uniform draw, plus one action draw
  /// when exploring.
  Action select_action(const DiscreteObsKey & key, double epsilon, Rng & rng) const;

  /// One-step Q-learning on the shaped reward r - lambda * safety_loss(eval).
  void update(const Transition & t, double lambda);

  double learning_rate() const { return learning_rate_; }
  double discount() const { return discount_; }

  /// Text format: header line, then one "key action value" line per entry.
  void save(std::ostream & out) const;
  static QFunction load(std::istream & in);

  bool operator==(const QFunction &) const = default;

private:
  double learning_rate_;
  double discount_;
  std::vector<std::array<double, kNumActions>> table_;
};

/// Rule-based backbone: brake on short ttc, accelerate on open road, merge
/// into a sufficient gap, otherwise hold.
struct HeuristicParams
{
  double brake_ttc = 2.0;
  double open_gap = 40.0;
  double cruise_speed = 30.0;
  double merge_gap = 10.0;
};

Action heuristic_policy(const Observation & obs, const HeuristicParams & params = {});

}  // namespace ctxsafe
