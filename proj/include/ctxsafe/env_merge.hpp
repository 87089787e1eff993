#pragma once

#include "ctxsafe/action.hpp"
#include "ctxsafe/constraints.hpp"
#include "ctxsafe/context.hpp"
#include "ctxsafe/context_model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctxsafe
{

enum class Condition { kStationary, kSeen, kUnseen };

std::string_view condition_name(Condition c);
std::optional<Condition> parse_condition(std::string_view name);

/// Raised on invalid inputs to the simulator (bad action id, stepping a
/// terminated episode).
class EnvContractError : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

/// Car-following parameters for one behavior level.
struct IdmParams
{
  double desired_speed;  // m/s
  double time_headway;   // s
  double min_spacing;    // m
  double max_accel;      // m/s^2
  double comfort_decel;  // m/s^2
};

struct EnvParams
{
  double dt = 0.5;
  int episode_length = 120;
  int highway_lanes = 2;
  double merge_zone_start = 80.0;
  double merge_zone_end = 200.0;  // ramp ends here
  double vehicle_length = 5.0;
  double v_max = 35.0;
  double ego_start_speed = 20.0;
  double faster_dv = 2.0;
  double slower_dv = 3.0;
  double lane_change_clearance = 2.0;
  double collision_margin = 1.0;
  double ttc_hard = 1.0;
  double ttc_cap = 99.0;
  double gap_sentinel = 1000.0;
  double clearance_cap = 50.0;

  double reward_speed = 0.4;
  double merge_bonus = 1.0;
  double lane_change_penalty = 0.05;

  /// Vehicles per highway lane inside the traffic window, per density level.
  std::array<int, 3> density_counts = {9, 16, 23};
  /// Lanes above the first carry this fraction of the first lane's count and
  /// add `passing_lane_speed` per lane to the desired speed.
  double passing_lane_density = 0.49;
  double passing_lane_speed = 4.4;
  double window_behind = 250.0;
  double window_ahead = 600.0;
  double spawn_spacing = 30.0;

  std::array<IdmParams, 3> idm = {{
    {23.9, 1.6, 4.0, 1.5, 2.0},
    {29.2, 1.2, 3.0, 2.0, 2.5},
    {34.5, 0.8, 2.0, 2.5, 3.0},
  }};
  double max_traffic_decel = 9.0;

  /// Per-vehicle per-step probability of a hard-braking episode, per behavior level.
  std::array<double, 3> brake_prob = {0.0253, 0.0555, 0.1217};
  double brake_decel = 6.4;
  int brake_steps = 4;
  /// Per-vehicle per-step probability of a lane change attempt, and the
  /// bumper gap accepted by the changer, per behavior level.
  std::array<double, 3> cut_in_prob = {0.0, 0.025, 0.05};
  std::array<double, 3> cut_in_gap = {15.0, 10.0, 2.7};

  /// Observation noise standard deviations per noise level.
  std::array<double, 3> noise_gap_sigma = {0.0, 0.5, 1.5};
  std::array<double, 3> noise_speed_sigma = {0.0, 0.25, 0.75};

  int switch_min_steps = 40;
  int switch_max_steps = 60;
  /// Probability that a later switch in the unseen condition is a held-out jump.
  double unseen_jump_prob = 0.5;
};

struct EgoState
{
  double x = 0.0;  // front bumper, m
  int lane = 0;    // 0 = ramp, 1..L highway
  double v = 20.0;
  bool merging_zone_active = false;
  bool merged = false;
};

struct Vehicle
{
  int id = 0;
  double x = 0.0;  // front bumper, m
  int lane = 1;
  double v = 0.0;
  double aggressiveness = 0.0;  // in [0, 1]
  double jitter = 0.0;          // per-vehicle offset of aggressiveness around the level
  int brake_remaining = 0;
};

struct EnvState
{
  int time_step = 0;
  EgoState ego;
  std::vector<Vehicle> traffic;
  Context true_context;
  int episode_length = 120;
  Condition condition = Condition::kStationary;
  /// schedule[t] is the true context at step t, t in [0, episode_length].
  std::vector<Context> schedule;
  int next_vehicle_id = 0;
  bool terminated = false;
  Rng rng;
};

/// Deterministic JSON rendering of the observable state (excludes the RNG).
std::string serialize(const EnvState & state);

struct LaneReading
{
  bool exists = false;
  double front_gap = 1000.0;
  double closing_speed = 0.0;
};

struct Observation
{
  double ego_speed = 0.0;
  /// Index 0: lane below (toward ramp), 1: own lane, 2: lane above.
  std::array<LaneReading, 3> lanes{};
  double merge_gap = 1000.0;
  bool in_merge_zone = false;
  bool on_ramp = false;
  /// Derived from the noisy own-lane gap and closing speed, capped.
  double ttc = 99.0;
  int time_step = 0;

  const LaneReading & own() const { return lanes[1]; }
};

struct StepOutcome
{
  EnvState next_state;
  double reward = 0.0;
  double cost = 0.0;
  bool hard_violation = false;
  bool collision = false;
  double clearance_increment = 0.0;
  double front_gap = 0.0;
  double ttc = 0.0;
  bool lane_changed = false;
  bool merged_now = false;
  bool terminated = false;
};

// Context schedules -----------------------------------------------------------

/// Single-axis +-1 move: the only kind the seen generator produces.
bool is_seen_transition(const Context & from, const Context & to);
/// Two axes flipped between levels 0 and 2 with the third unchanged.
bool is_held_out_transition(const Context & from, const Context & to);

std::vector<Context> generate_schedule(
  Condition condition, int episode_length, const EnvParams & params, Rng & rng);

Context schedule_context(const EnvState & state, int time_step);

/// Highway-merge simulator. Stateless apart from parameters; every call is a
/// pure function of its arguments.
class MergeEnv
{
public:
  explicit MergeEnv(EnvParams params = {});

  const EnvParams & params() const { return params_; }

  EnvState reset(Condition condition, std::uint64_t seed) const;

  StepOutcome step(const EnvState & state, Action action) const;

  /// One-step lookahead on a copy of the state with deterministic traffic
  /// driven by `assumed_context`'s behavior level.
  PredictedMargins predict_margins(const EnvState & state, Action action, const Context & assumed_context) const;

  Observation observe(const EnvState & state, Rng & rng) const;

  /// Same as observe with noise disabled.
  Observation true_observation(const EnvState & state) const;

private:
  struct Advance
  {
    bool lane_changed = false;
    bool merged_now = false;
    bool collision = false;
    double front_gap = 0.0;
    double closing_speed = 0.0;
    double ttc = 0.0;
  };

  Advance advance(
    EgoState & ego, std::vector<Vehicle> & traffic, Action action,
    std::optional<double> assumed_aggressiveness) const;

  bool target_lane_exists(const EgoState & ego, int target) const;
  bool lane_is_clear(const std::vector<Vehicle> & traffic, int lane, double x, double clearance) const;
  IdmParams idm_for(double aggressiveness, int lane) const;
  int lane_vehicle_count(int density_level, int lane) const;
  double idm_accel(const IdmParams & p, double v, double gap, double lead_v) const;
  void apply_context(EnvState & state, const Context & next) const;
  void maintain_traffic(EnvState & state) const;
  bool spawn_vehicle(EnvState & state, int lane, bool ahead) const;
  double graded_cost(double ttc) const;
  Observation make_observation(const EnvState & state, Rng * rng) const;

  EnvParams params_;
};

}  // namespace ctxsafe
