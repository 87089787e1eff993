#include "ctxsafe/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <vector>

namespace ctxsafe
{

namespace
{

using json = nlohmann::json;

struct Field
{
  std::string key;
  std::function<json(const Config &)> get;
  std::function<void(Config &, const json &)> set;
};

template <typename T, typename Access>
Field field(std::string key, Access access)
{
  return Field{
    key, [access](const Config & c) { return json(access(const_cast<Config &>(c))); },
    [access, key](Config & c, const json & v) {
      try {
        access(c) = v.get<T>();
      } catch (const json::exception & e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    }};
}

template <typename Member>
Field idm_field(std::string key, Member member)
{
  return Field{
    key,
    [member](const Config & c) {
      std::array<double, 3> out{};
      for (std::size_t i = 0; i < 3; ++i) out[i] = c.env.idm[i].*member;
      return json(out);
    },
    [member, key](Config & c, const json & v) {
      try {
        const auto arr = v.get<std::array<double, 3>>();
        for (std::size_t i = 0; i < 3; ++i) c.env.idm[i].*member = arr[i];
      } catch (const json::exception & e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    }};
}

#define CTXSAFE_FIELD(T, KEY, EXPR) field<T>(KEY, [](Config & c) -> T & { return EXPR; })

const std::vector<Field> & fields()
{
  using A3 = std::array<double, 3>;
  using I3 = std::array<int, 3>;
  static const std::vector<Field> all = {
    CTXSAFE_FIELD(double, "env.dt", c.env.dt),
    CTXSAFE_FIELD(int, "env.episode_length", c.env.episode_length),
    CTXSAFE_FIELD(int, "env.highway_lanes", c.env.highway_lanes),
    CTXSAFE_FIELD(double, "env.merge_zone_start", c.env.merge_zone_start),
    CTXSAFE_FIELD(double, "env.merge_zone_end", c.env.merge_zone_end),
    CTXSAFE_FIELD(double, "env.vehicle_length", c.env.vehicle_length),
    CTXSAFE_FIELD(double, "env.v_max", c.env.v_max),
    CTXSAFE_FIELD(double, "env.ego_start_speed", c.env.ego_start_speed),
    CTXSAFE_FIELD(double, "env.faster_dv", c.env.faster_dv),
    CTXSAFE_FIELD(double, "env.slower_dv", c.env.slower_dv),
    CTXSAFE_FIELD(double, "env.lane_change_clearance", c.env.lane_change_clearance),
    CTXSAFE_FIELD(double, "env.collision_margin", c.env.collision_margin),
    CTXSAFE_FIELD(double, "env.ttc_hard", c.env.ttc_hard),
    CTXSAFE_FIELD(double, "env.ttc_cap", c.env.ttc_cap),
    CTXSAFE_FIELD(double, "env.gap_sentinel", c.env.gap_sentinel),
    CTXSAFE_FIELD(double, "env.clearance_cap", c.env.clearance_cap),
    CTXSAFE_FIELD(double, "env.reward.speed", c.env.reward_speed),
    CTXSAFE_FIELD(double, "env.reward.merge_bonus", c.env.merge_bonus),
    CTXSAFE_FIELD(double, "env.reward.lane_change_penalty", c.env.lane_change_penalty),
    CTXSAFE_FIELD(I3, "env.density_counts", c.env.density_counts),
    CTXSAFE_FIELD(double, "env.passing_lane_density", c.env.passing_lane_density),
    CTXSAFE_FIELD(double, "env.passing_lane_speed", c.env.passing_lane_speed),
    CTXSAFE_FIELD(double, "env.window_behind", c.env.window_behind),
    CTXSAFE_FIELD(double, "env.window_ahead", c.env.window_ahead),
    CTXSAFE_FIELD(double, "env.spawn_spacing", c.env.spawn_spacing),
    idm_field("env.idm.desired_speed", &IdmParams::desired_speed),
    idm_field("env.idm.time_headway", &IdmParams::time_headway),
    idm_field("env.idm.min_spacing", &IdmParams::min_spacing),
    idm_field("env.idm.max_accel", &IdmParams::max_accel),
    idm_field("env.idm.comfort_decel", &IdmParams::comfort_decel),
    CTXSAFE_FIELD(double, "env.max_traffic_decel", c.env.max_traffic_decel),
    CTXSAFE_FIELD(A3, "env.brake_prob", c.env.brake_prob),
    CTXSAFE_FIELD(double, "env.brake_decel", c.env.brake_decel),
    CTXSAFE_FIELD(int, "env.brake_steps", c.env.brake_steps),
    CTXSAFE_FIELD(A3, "env.cut_in_prob", c.env.cut_in_prob),
    CTXSAFE_FIELD(A3, "env.cut_in_gap", c.env.cut_in_gap),
    CTXSAFE_FIELD(A3, "env.noise.gap_sigma", c.env.noise_gap_sigma),
    CTXSAFE_FIELD(A3, "env.noise.speed_sigma", c.env.noise_speed_sigma),
    CTXSAFE_FIELD(int, "env.switch_min_steps", c.env.switch_min_steps),
    CTXSAFE_FIELD(int, "env.switch_max_steps", c.env.switch_max_steps),
    CTXSAFE_FIELD(double, "env.unseen_jump_prob", c.env.unseen_jump_prob),

    CTXSAFE_FIELD(double, "cb.table.front_gap", c.cb_base.min_front_gap),
    CTXSAFE_FIELD(double, "cb.table.ttc", c.cb_base.min_ttc),
    CTXSAFE_FIELD(double, "cb.table.merge_gap", c.cb_base.min_merge_gap),
    CTXSAFE_FIELD(double, "cb.table.closing_speed", c.cb_base.max_closing_speed),
    CTXSAFE_FIELD(double, "cb.table.scale", c.cb_scale),
    CTXSAFE_FIELD(double, "phi.alpha", c.constraint.alpha),
    CTXSAFE_FIELD(double, "phi.beta", c.constraint.beta),
    CTXSAFE_FIELD(double, "phi.epsilon", c.constraint.epsilon),
    CTXSAFE_FIELD(double, "as.gamma", c.constraint.as_gamma),
    CTXSAFE_FIELD(double, "as.rho_clip", c.constraint.as_rho_clip),

    CTXSAFE_FIELD(int, "context.horizon", c.context.horizon),
    CTXSAFE_FIELD(double, "context.self_prior", c.context.self_prior),
    CTXSAFE_FIELD(double, "context.default_cap", c.context.default_cap),
    CTXSAFE_FIELD(int, "context.recovery_window", c.context.recovery_window),
    CTXSAFE_FIELD(double, "context.epsilon", c.context.epsilon),
    CTXSAFE_FIELD(int, "context.history_capacity", c.context.history_capacity),
    CTXSAFE_FIELD(A3, "context.detect_noise", c.context.detect_noise),
    CTXSAFE_FIELD(A3, "context.weights", c.context.weights),

    CTXSAFE_FIELD(double, "agent.lr", c.agent.lr),
    CTXSAFE_FIELD(double, "agent.gamma", c.agent.gamma),
    CTXSAFE_FIELD(double, "agent.q_init", c.agent.q_init),
    CTXSAFE_FIELD(double, "agent.eps_start", c.agent.eps_start),
    CTXSAFE_FIELD(double, "agent.eps_end", c.agent.eps_end),
    CTXSAFE_FIELD(int, "agent.eps_decay_episodes", c.agent.eps_decay_episodes),
    CTXSAFE_FIELD(double, "agent.eps_eval", c.agent.eps_eval),
    CTXSAFE_FIELD(double, "agent.lambda", c.agent.lambda),
    CTXSAFE_FIELD(double, "agent.heuristic.brake_ttc", c.agent.heuristic.brake_ttc),
    CTXSAFE_FIELD(double, "agent.heuristic.open_gap", c.agent.heuristic.open_gap),
    CTXSAFE_FIELD(double, "agent.heuristic.cruise_speed", c.agent.heuristic.cruise_speed),
    CTXSAFE_FIELD(double, "agent.heuristic.merge_gap", c.agent.heuristic.merge_gap),

    CTXSAFE_FIELD(double, "harness.budget", c.harness.budget),
    CTXSAFE_FIELD(int, "harness.train_episodes", c.harness.train_episodes),
    CTXSAFE_FIELD(std::uint64_t, "harness.base_seed", c.harness.base_seed),
    CTXSAFE_FIELD(I3, "harness.fixed_context", c.harness.fixed_context),
  };
  return all;
}

#undef CTXSAFE_FIELD

void flatten(const json & node, const std::string & prefix, std::map<std::string, json> & out)
{
  if (node.is_object()) {
    for (const auto & [k, v] : node.items()) {
      flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    }
    return;
  }
  if (out.contains(prefix)) throw ConfigError("config key '" + prefix + "' given twice");
  out[prefix] = node;
}

}  // namespace

void Config::validate() const
{
  auto require = [](bool ok, const char * msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(harness.budget >= 0.0, "harness.budget must be nonnegative");
  require(harness.train_episodes >= 0, "harness.train_episodes must be nonnegative");
  require(context.horizon >= 1, "context.horizon must be >= 1");
  require(context.self_prior >= 0.0, "context.self_prior must be nonnegative");
  require(context.default_cap > 0.0, "context.default_cap must be positive");
  require(context.recovery_window >= 1, "context.recovery_window must be >= 1");
  require(context.epsilon > 0.0, "context.epsilon must be positive");
  require(context.history_capacity >= 5, "context.history_capacity must be >= 5");
  for (double p : context.detect_noise) require(p >= 0.0 && p <= 1.0, "context.detect_noise must lie in [0,1]");
  for (double w : context.weights) require(w > 0.0, "context.weights must be positive");
  require(constraint.alpha >= 0.0 && constraint.beta >= 0.0, "phi.alpha and phi.beta must be nonnegative");
  require(constraint.epsilon > 0.0, "phi.epsilon must be positive");
  require(constraint.as_gamma >= 0.0 && constraint.as_rho_clip >= 0.0, "as.* must be nonnegative");
  require(cb_base.min_front_gap > 0.0 && cb_base.min_ttc > 0.0 && cb_base.min_merge_gap > 0.0 &&
            cb_base.max_closing_speed > 0.0,
          "cb.table base thresholds must be positive");
  require(cb_scale >= 0.0, "cb.table.scale must be nonnegative");
  require(agent.lambda >= 0.0, "agent.lambda must be nonnegative");
  require(fixed_context().valid(), "harness.fixed_context must hold levels in {0,1,2}");
  for (int n : env.density_counts) require(n >= 1, "env.density_counts must be positive");
}

Config config_from_json(const nlohmann::json & doc, Config base)
{
  if (!doc.is_object()) throw ConfigError("config root must be an object");
  std::map<std::string, json> flat;
  flatten(doc, "", flat);
  std::map<std::string, const Field *> index;
  for (const Field & f : fields()) index[f.key] = &f;
  for (const auto & [key, value] : flat) {
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second->set(base, value);
  }
  base.validate();
  return base;
}

Config load_config(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error & e) {
    throw ConfigError("cannot parse config file " + path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

nlohmann::ordered_json config_to_json(const Config & config)
{
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const Field & f : fields()) {
    nlohmann::ordered_json * node = &out;
    std::string rest = f.key;
    for (std::size_t dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
      node = &(*node)[rest.substr(0, dot)];
      rest = rest.substr(dot + 1);
    }
    (*node)[rest] = f.get(config);
  }
  return out;
}

}  // namespace ctxsafe
