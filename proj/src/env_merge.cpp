#include "ctxsafe/env_merge.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctxsafe
{

namespace
{

constexpr std::uint64_t kEnvStream = 0x656e765f6d657267ULL;

std::vector<Context> seen_neighbors(const Context & c)
{
  std::vector<Context> out;
  for (int axis = 0; axis < 3; ++axis) {
    for (int delta : {-1, 1}) {
      Context n = c;
      int & field = axis == 0 ? n.density : (axis == 1 ? n.behavior : n.noise);
      field += delta;
      if (n.valid()) out.push_back(n);
    }
  }
  return out;
}

bool is_extreme(int level) { return level == 0 || level == 2; }

std::vector<Context> held_out_neighbors(const Context & c)
{
  std::vector<Context> out;
  const std::array<int, 3> levels = {c.density, c.behavior, c.noise};
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (!is_extreme(levels[i]) || !is_extreme(levels[j])) continue;
      std::array<int, 3> next = levels;
      next[i] = 2 - next[i];
      next[j] = 2 - next[j];
      out.push_back(Context{next[0], next[1], next[2]});
    }
  }
  return out;
}

template <typename T>
const T & pick(const std::vector<T> & v, Rng & rng)
{
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

double front_gap_between(double follower_x, double leader_x, double length)
{
  return leader_x - length - follower_x;
}

}  // namespace

std::string_view condition_name(Condition c)
{
  switch (c) {
    case Condition::kStationary:
      return "stationary";
    case Condition::kSeen:
      return "seen";
    case Condition::kUnseen:
      return "unseen";
  }
  return "unknown";
}

std::optional<Condition> parse_condition(std::string_view name)
{
  for (Condition c : {Condition::kStationary, Condition::kSeen, Condition::kUnseen}) {
    if (condition_name(c) == name) return c;
  }
  return std::nullopt;
}

bool is_seen_transition(const Context & from, const Context & to)
{
  return context_discrepancy(from, to) == 1.0;
}

bool is_held_out_transition(const Context & from, const Context & to)
{
  const auto held = held_out_neighbors(from);
  return std::find(held.begin(), held.end(), to) != held.end();
}

std::vector<Context> generate_schedule(
  Condition condition, int episode_length, const EnvParams & params, Rng & rng)
{
  if (episode_length < 1) throw EnvContractError("episode_length must be positive");
  const auto contexts = all_contexts();

  Context current;
  if (condition == Condition::kUnseen) {
    std::vector<Context> eligible;
    for (const Context & c : contexts) {
      if (!held_out_neighbors(c).empty()) eligible.push_back(c);
    }
    current = pick(eligible, rng);
  } else {
    std::uniform_int_distribution<int> d(0, kNumContexts - 1);
    current = contexts[static_cast<std::size_t>(d(rng))];
  }

  std::vector<Context> schedule(static_cast<std::size_t>(episode_length) + 1, current);
  if (condition == Condition::kStationary) return schedule;

  std::uniform_int_distribution<int> dwell(params.switch_min_steps, params.switch_max_steps);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool first_switch = true;
  int t = dwell(rng);
  while (t <= episode_length) {
    Context next;
    if (condition == Condition::kUnseen) {
      const auto held = held_out_neighbors(current);
      const bool jump = !held.empty() && (first_switch || unit(rng) < params.unseen_jump_prob);
      next = jump ? pick(held, rng) : pick(seen_neighbors(current), rng);
    } else {
      next = pick(seen_neighbors(current), rng);
    }
    first_switch = false;
    current = next;
    std::fill(schedule.begin() + t, schedule.end(), current);
    t += dwell(rng);
  }
  return schedule;
}

Context schedule_context(const EnvState & state, int time_step)
{
  if (state.schedule.empty()) return state.true_context;
  const int last = static_cast<int>(state.schedule.size()) - 1;
  return state.schedule[static_cast<std::size_t>(std::clamp(time_step, 0, last))];
}

std::string serialize(const EnvState & s)
{
  nlohmann::ordered_json j;
  j["time_step"] = s.time_step;
  j["ego"] = {
    {"x", s.ego.x}, {"lane", s.ego.lane}, {"v", s.ego.v},
    {"merging_zone_active", s.ego.merging_zone_active}, {"merged", s.ego.merged}};
  auto & traffic = j["traffic"] = nlohmann::ordered_json::array();
  for (const Vehicle & v : s.traffic) {
    traffic.push_back(
      {{"id", v.id}, {"x", v.x}, {"lane", v.lane}, {"v", v.v},
       {"aggressiveness", v.aggressiveness}, {"brake_remaining", v.brake_remaining}});
  }
  j["true_context"] = {s.true_context.density, s.true_context.behavior, s.true_context.noise};
  auto & sched = j["schedule"] = nlohmann::ordered_json::array();
  for (const Context & c : s.schedule) sched.push_back(c.index());
  j["condition"] = condition_name(s.condition);
  j["terminated"] = s.terminated;
  return j.dump();
}

MergeEnv::MergeEnv(EnvParams params) : params_(std::move(params))
{
  if (!(params_.dt > 0.0)) throw std::invalid_argument("env.dt must be positive");
  if (params_.episode_length < 1) throw std::invalid_argument("env.episode_length must be positive");
  if (params_.highway_lanes < 1) throw std::invalid_argument("env.highway_lanes must be positive");
  if (params_.switch_min_steps < 1 || params_.switch_max_steps < params_.switch_min_steps) {
    throw std::invalid_argument("env switch interval is malformed");
  }
}

EnvState MergeEnv::reset(Condition condition, std::uint64_t seed) const
{
  EnvState s;
  std::seed_seq seq{
    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
    static_cast<std::uint32_t>(kEnvStream), static_cast<std::uint32_t>(kEnvStream >> 32)};
  s.rng.seed(seq);
  s.condition = condition;
  s.episode_length = params_.episode_length;
  s.schedule = generate_schedule(condition, params_.episode_length, params_, s.rng);
  s.true_context = s.schedule.front();
  s.ego = EgoState{};
  s.ego.v = params_.ego_start_speed;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double span = params_.window_behind + params_.window_ahead;
  for (int lane = 1; lane <= params_.highway_lanes; ++lane) {
    const int per_lane = lane_vehicle_count(s.true_context.density, lane);
    const double segment = span / per_lane;
    for (int k = 0; k < per_lane; ++k) {
      Vehicle v;
      v.id = s.next_vehicle_id++;
      v.lane = lane;
      v.x = -params_.window_behind + k * segment +
            unit(s.rng) * std::max(0.0, segment - params_.spawn_spacing);
      v.jitter = 0.3 * unit(s.rng) - 0.15;
      v.aggressiveness = std::clamp(s.true_context.behavior / 2.0 + v.jitter, 0.0, 1.0);
      v.v = std::clamp(idm_for(v.aggressiveness, lane).desired_speed - 3.0 * unit(s.rng), 0.0, params_.v_max);
      s.traffic.push_back(v);
    }
  }
  s.ego.merging_zone_active = false;
  return s;
}


bool MergeEnv::target_lane_exists(const EgoState & ego, int target) const
{
  if (target < 1 || target > params_.highway_lanes) return false;
  // The ramp joins lane 1 only inside the merge zone.
  if (ego.lane == 0) {
    return target == 1 && ego.x >= params_.merge_zone_start && ego.x < params_.merge_zone_end;
  }
  return true;
}

bool MergeEnv::lane_is_clear(
  const std::vector<Vehicle> & traffic, int lane, double x, double clearance) const
{
  const double len = params_.vehicle_length;
  for (const Vehicle & v : traffic) {
    if (v.lane != lane) continue;
    const double gap = v.x > x ? front_gap_between(x, v.x, len) : front_gap_between(v.x, x, len);
    if (gap < clearance) return false;
  }
  return true;
}

int MergeEnv::lane_vehicle_count(int density_level, int lane) const
{
  const int base = params_.density_counts[static_cast<std::size_t>(density_level)];
  if (lane <= 1) return base;
  return std::max(1, static_cast<int>(std::lround(base * params_.passing_lane_density)));
}

IdmParams MergeEnv::idm_for(double aggressiveness, int lane) const
{
  const double pos = std::clamp(aggressiveness, 0.0, 1.0) * 2.0;
  const int lo = std::min(static_cast<int>(pos), 1);
  const double f = pos - lo;
  const IdmParams & a = params_.idm[static_cast<std::size_t>(lo)];
  const IdmParams & b = params_.idm[static_cast<std::size_t>(lo + 1)];
  auto mix = [f](double p, double q) { return p + f * (q - p); };
  return IdmParams{
    mix(a.desired_speed, b.desired_speed) + params_.passing_lane_speed * std::max(0, lane - 1), mix(a.time_headway, b.time_headway),
    mix(a.min_spacing, b.min_spacing), mix(a.max_accel, b.max_accel),
    mix(a.comfort_decel, b.comfort_decel)};
}

double MergeEnv::idm_accel(const IdmParams & p, double v, double gap, double lead_v) const
{
  const double free_term = std::pow(v / p.desired_speed, 4.0);
  if (!std::isfinite(gap)) return p.max_accel * (1.0 - free_term);
  const double s_star =
    p.min_spacing +
    std::max(0.0, v * p.time_headway + v * (v - lead_v) / (2.0 * std::sqrt(p.max_accel * p.comfort_decel)));
  const double s = std::max(gap, 0.1);
  return p.max_accel * (1.0 - free_term - (s_star / s) * (s_star / s));
}

double MergeEnv::graded_cost(double ttc) const
{
  return std::clamp((params_.ttc_hard - ttc) / params_.ttc_hard, 0.0, 1.0);
}

MergeEnv::Advance MergeEnv::advance(
  EgoState & ego, std::vector<Vehicle> & traffic, Action action,
  std::optional<double> assumed_aggressiveness) const
{
  Advance out;
  const double len = params_.vehicle_length;
  const double dt = params_.dt;

  if (action == Action::kFaster) ego.v = std::min(params_.v_max, ego.v + params_.faster_dv);
  if (action == Action::kSlower) ego.v = std::max(0.0, ego.v - params_.slower_dv);
  if (is_lane_change(action)) {
    const int target = ego.lane + (action == Action::kLaneLeft ? 1 : -1);
    if (
      target_lane_exists(ego, target) &&
      lane_is_clear(traffic, target, ego.x, params_.lane_change_clearance)) {
      out.merged_now = ego.lane == 0;
      ego.lane = target;
      out.lane_changed = true;
      if (out.merged_now) ego.merged = true;
    }
  }

  // Car-following on pre-step positions; the ego takes part as a leader.
  struct Entry
  {
    double x;
    double v;
    int lane;
    int idx;  // -1 for the ego
  };
  std::vector<Entry> order;
  order.reserve(traffic.size() + 1);
  for (std::size_t i = 0; i < traffic.size(); ++i) {
    order.push_back({traffic[i].x, traffic[i].v, traffic[i].lane, static_cast<int>(i)});
  }
  if (ego.lane >= 1) order.push_back({ego.x, ego.v, ego.lane, -1});
  std::sort(order.begin(), order.end(), [](const Entry & a, const Entry & b) {
    if (a.lane != b.lane) return a.lane < b.lane;
    if (a.x != b.x) return a.x > b.x;
    return a.idx < b.idx;
  });

  std::vector<double> accel(traffic.size(), 0.0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Entry & e = order[k];
    if (e.idx < 0) continue;
    Vehicle & veh = traffic[static_cast<std::size_t>(e.idx)];
    double gap = std::numeric_limits<double>::infinity();
    double lead_v = veh.v;
    if (k > 0 && order[k - 1].lane == e.lane) {
      gap = front_gap_between(e.x, order[k - 1].x, len);
      lead_v = order[k - 1].v;
    }
    const IdmParams p = idm_for(assumed_aggressiveness.value_or(veh.aggressiveness), veh.lane);
    double a = idm_accel(p, veh.v, gap, lead_v);
    if (!assumed_aggressiveness && veh.brake_remaining > 0) {
      a = std::min(a, -params_.brake_decel);
      --veh.brake_remaining;
    }
    accel[static_cast<std::size_t>(e.idx)] = std::max(a, -params_.max_traffic_decel);
  }

  const double ego_x0 = ego.x;
  std::vector<char> was_ahead(traffic.size(), 0);
  for (std::size_t i = 0; i < traffic.size(); ++i) was_ahead[i] = traffic[i].x > ego_x0;

  for (std::size_t i = 0; i < traffic.size(); ++i) {
    Vehicle & veh = traffic[i];
    const double v_next = std::clamp(veh.v + accel[i] * dt, 0.0, params_.v_max);
    veh.x += 0.5 * (veh.v + v_next) * dt;
    veh.v = v_next;
  }
  ego.x += ego.v * dt;

  out.front_gap = params_.gap_sentinel;
  out.closing_speed = 0.0;
  out.ttc = params_.ttc_cap;
  if (ego.lane >= 1) {
    const Vehicle * lead = nullptr;
    for (std::size_t i = 0; i < traffic.size(); ++i) {
      const Vehicle & veh = traffic[i];
      if (veh.lane != ego.lane) continue;
      const bool ahead = veh.x > ego.x;
      if (ahead != static_cast<bool>(was_ahead[i])) out.collision = true;
      const double gap = ahead ? front_gap_between(ego.x, veh.x, len) : front_gap_between(veh.x, ego.x, len);
      if (gap < params_.collision_margin) out.collision = true;
      if (ahead && (lead == nullptr || veh.x < lead->x)) lead = &veh;
    }
    if (lead != nullptr) {
      out.front_gap = front_gap_between(ego.x, lead->x, len);
      out.closing_speed = ego.v - lead->v;
      if (out.front_gap <= 0.0) {
        out.ttc = 0.0;
      } else if (out.closing_speed > 0.0) {
        out.ttc = std::min(out.front_gap / out.closing_speed, params_.ttc_cap);
      }
    }
  }
  if (out.collision) out.ttc = 0.0;
  return out;
}

void MergeEnv::apply_context(EnvState & state, const Context & next) const
{
  if (next.behavior != state.true_context.behavior) {
    for (Vehicle & v : state.traffic) {
      v.aggressiveness = std::clamp(next.behavior / 2.0 + v.jitter, 0.0, 1.0);
    }
  }
  state.true_context = next;
}

bool MergeEnv::spawn_vehicle(EnvState & state, int lane, bool ahead) const
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double band = 150.0;
  const double x = ahead ? state.ego.x + params_.window_ahead - band * unit(state.rng)
                         : state.ego.x - params_.window_behind + band * unit(state.rng);
  const double jitter = 0.3 * unit(state.rng) - 0.15;
  const double speed_offset = 3.0 * unit(state.rng);
  for (const Vehicle & v : state.traffic) {
    if (v.lane == lane && std::abs(v.x - x) < params_.spawn_spacing) return false;
  }
  if (state.ego.lane == lane && std::abs(state.ego.x - x) < params_.spawn_spacing) return false;
  Vehicle v;
  v.id = state.next_vehicle_id++;
  v.lane = lane;
  v.x = x;
  v.jitter = jitter;
  v.aggressiveness = std::clamp(state.true_context.behavior / 2.0 + jitter, 0.0, 1.0);
  v.v = std::clamp(idm_for(v.aggressiveness, lane).desired_speed - speed_offset, 0.0, params_.v_max);
  state.traffic.push_back(v);
  return true;
}

void MergeEnv::maintain_traffic(EnvState & state) const
{
  const double lo = state.ego.x - params_.window_behind - 50.0;
  const double hi = state.ego.x + params_.window_ahead + 50.0;
  std::erase_if(state.traffic, [&](const Vehicle & v) { return v.x < lo || v.x > hi; });

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int lane = 1; lane <= params_.highway_lanes; ++lane) {
    const int target = lane_vehicle_count(state.true_context.density, lane);
    auto lane_count = [&] {
      return static_cast<int>(std::count_if(
        state.traffic.begin(), state.traffic.end(), [&](const Vehicle & v) { return v.lane == lane; }));
    };
    int count = lane_count();
    while (count > target) {
      auto far = state.traffic.end();
      double far_dist = 150.0;
      for (auto it = state.traffic.begin(); it != state.traffic.end(); ++it) {
        const double d = std::abs(it->x - state.ego.x);
        if (it->lane == lane && d > far_dist) {
          far_dist = d;
          far = it;
        }
      }
      if (far == state.traffic.end()) break;
      state.traffic.erase(far);
      --count;
    }
    for (int attempt = 0; count < target && attempt < 4; ++attempt) {
      if (spawn_vehicle(state, lane, unit(state.rng) < 0.5)) ++count;
    }
  }
}

StepOutcome MergeEnv::step(const EnvState & state, Action action) const
{
  const int action_id = to_index(action);
  if (action_id < 0 || action_id >= kNumActions) {
    throw EnvContractError("invalid action id " + std::to_string(action_id));
  }
  if (state.terminated) throw EnvContractError("step called on a terminated episode");

  StepOutcome out;
  out.next_state = state;
  EnvState & ns = out.next_state;

  // Stochastic traffic events, drawn in vehicle order.
  const auto b = static_cast<std::size_t>(ns.true_context.behavior);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Vehicle & veh : ns.traffic) {
    const double u_brake = unit(ns.rng);
    const double u_cut = unit(ns.rng);
    if (u_brake < params_.brake_prob[b] && veh.brake_remaining == 0) {
      veh.brake_remaining = params_.brake_steps;
    }
    if (u_cut < params_.cut_in_prob[b]) {
      const int target = veh.lane + (unit(ns.rng) < 0.5 ? -1 : 1);
      if (target < 1 || target > params_.highway_lanes) continue;
      bool clear = lane_is_clear(ns.traffic, target, veh.x, params_.cut_in_gap[b]);
      if (clear && ns.ego.lane == target) {
        const double len = params_.vehicle_length;
        const double gap = ns.ego.x > veh.x ? front_gap_between(veh.x, ns.ego.x, len)
                                            : front_gap_between(ns.ego.x, veh.x, len);
        clear = gap >= params_.cut_in_gap[b];
      }
      if (clear) veh.lane = target;
    }
  }

  const Advance adv = advance(ns.ego, ns.traffic, action, std::nullopt);
  ns.time_step += 1;

  out.collision = adv.collision;
  out.lane_changed = adv.lane_changed;
  out.merged_now = adv.merged_now;
  out.front_gap = std::max(0.0, adv.front_gap);
  out.ttc = adv.ttc;
  out.cost = (adv.collision ? 1.0 : 0.0) + graded_cost(adv.ttc);
  out.hard_violation = adv.collision || adv.ttc < params_.ttc_hard;
  out.reward = params_.reward_speed * (ns.ego.v / params_.v_max) +
               (adv.merged_now ? params_.merge_bonus : 0.0) -
               (adv.lane_changed ? params_.lane_change_penalty : 0.0);
  out.clearance_increment = std::min(out.front_gap, params_.clearance_cap);

  ns.ego.merging_zone_active = ns.ego.lane == 0 && ns.ego.x >= params_.merge_zone_start &&
                               ns.ego.x < params_.merge_zone_end;
  const bool missed_merge = ns.ego.lane == 0 && ns.ego.x >= params_.merge_zone_end;

  const Context next_context = schedule_context(ns, ns.time_step);
  if (next_context != ns.true_context) apply_context(ns, next_context);
  maintain_traffic(ns);

  ns.terminated = adv.collision || missed_merge || ns.time_step >= ns.episode_length;
  out.terminated = ns.terminated;
  return out;
}

PredictedMargins MergeEnv::predict_margins(
  const EnvState & state, Action action, const Context & assumed_context) const
{
  const int action_id = to_index(action);
  if (action_id < 0 || action_id >= kNumActions) {
    throw EnvContractError("invalid action id " + std::to_string(action_id));
  }
  EgoState ego = state.ego;
  std::vector<Vehicle> nearby;
  nearby.reserve(state.traffic.size());
  for (const Vehicle & v : state.traffic) {
    if (std::abs(v.x - ego.x) <= 250.0) nearby.push_back(v);
  }
  const Advance adv = advance(ego, nearby, action, assumed_context.behavior / 2.0);

  PredictedMargins m;
  m.front_gap = std::max(0.0, adv.front_gap);
  m.ttc = adv.collision ? 0.0 : std::max(adv.ttc, 1e-3);
  m.closing_speed = adv.closing_speed;
  m.expected_cost = (adv.collision ? 1.0 : 0.0) + graded_cost(adv.ttc);
  m.merging = adv.merged_now;
  if (m.merging) {
    const double len = params_.vehicle_length;
    double gap = params_.gap_sentinel;
    for (const Vehicle & v : nearby) {
      if (v.lane != ego.lane) continue;
      const double g = v.x > ego.x ? front_gap_between(ego.x, v.x, len) : front_gap_between(v.x, ego.x, len);
      gap = std::min(gap, g);
    }
    m.merge_gap = std::max(0.0, gap);
  }
  return m;
}

Observation MergeEnv::make_observation(const EnvState & state, Rng * rng) const
{
  const auto n = static_cast<std::size_t>(state.true_context.noise);
  const double sg = params_.noise_gap_sigma[n];
  const double sv = params_.noise_speed_sigma[n];
  auto noisy = [&](double value, double sigma) {
    if (rng == nullptr || sigma <= 0.0) return value;
    std::normal_distribution<double> d(0.0, sigma);
    return value + d(*rng);
  };
  const double len = params_.vehicle_length;
  const EgoState & ego = state.ego;

  Observation o;
  o.time_step = state.time_step;
  o.ego_speed = std::max(0.0, noisy(ego.v, sv));
  o.on_ramp = ego.lane == 0;
  o.in_merge_zone = ego.merging_zone_active ||
                    (ego.lane == 0 && ego.x >= params_.merge_zone_start && ego.x < params_.merge_zone_end);
  for (int k = 0; k < 3; ++k) {
    const int lane = ego.lane + k - 1;
    LaneReading & r = o.lanes[static_cast<std::size_t>(k)];
    r.exists = (lane >= 1 && lane <= params_.highway_lanes) || (lane == 0 && ego.lane == 0);
    if (!r.exists || lane == 0) continue;
    const Vehicle * lead = nullptr;
    for (const Vehicle & v : state.traffic) {
      if (v.lane == lane && v.x > ego.x && (lead == nullptr || v.x < lead->x)) lead = &v;
    }
    if (lead == nullptr) continue;
    r.front_gap = std::max(0.0, noisy(front_gap_between(ego.x, lead->x, len), sg));
    r.closing_speed = noisy(ego.v - lead->v, sv);
  }
  if (o.in_merge_zone) {
    double gap = params_.gap_sentinel;
    for (const Vehicle & v : state.traffic) {
      if (v.lane != 1) continue;
      const double g = v.x > ego.x ? front_gap_between(ego.x, v.x, len) : front_gap_between(v.x, ego.x, len);
      gap = std::min(gap, g);
    }
    if (gap < params_.gap_sentinel) gap = noisy(gap, sg);
    o.merge_gap = std::max(0.0, gap);
  }
  const LaneReading & own = o.own();
  o.ttc = own.closing_speed > 0.0 ? std::min(own.front_gap / own.closing_speed, params_.ttc_cap)
                                  : params_.ttc_cap;
  return o;
}

Observation MergeEnv::observe(const EnvState & state, Rng & rng) const
{
  return make_observation(state, &rng);
}

Observation MergeEnv::true_observation(const EnvState & state) const
{
  return make_observation(state, nullptr);
}

}  // namespace ctxsafe
