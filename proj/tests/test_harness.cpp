#include "ctxsafe/harness.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

using namespace ctxsafe;
namespace fs = std::filesystem;

namespace
{

Config small_config()
{
  Config c;
  c.harness.train_episodes = 4;
  return c;
}

// Nearly empty road: one vehicle per lane and no scripted events.
Config quiet_config()
{
  Config c = small_config();
  c.env.density_counts = {1, 1, 1};
  c.env.brake_prob = {0.0, 0.0, 0.0};
  c.env.cut_in_prob = {0.0, 0.0, 0.0};
  return c;
}

MethodSpec full_method(const Config & c)
{
  return experiment_methods(Experiment::kMain, c).back();
}

EpisodeRecord synthetic_record(
  const std::string & method, std::uint64_t seed, int run, const std::vector<double> & rewards, int violations)
{
  EpisodeRecord r;
  r.header.experiment = "c8";
  r.header.method = method;
  r.header.condition = "unseen";
  r.header.seed = seed;
  r.header.run = run;
  r.header.budget_total = 5.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    StepLog s;
    s.t = static_cast<int>(i);
    s.reward = rewards[i];
    s.cost = 0.5;
    s.violation = static_cast<int>(i) < violations;
    r.steps.push_back(s);
  }
  r.header.steps = static_cast<int>(r.steps.size());
  return r;
}

const AggregateRow & find_row(const std::vector<AggregateRow> & rows, const std::string & method, const std::string & metric)
{
  const auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow & r) {
    return r.method == method && r.metric == metric;
  });
  if (it == rows.end()) throw std::runtime_error("row not found: " + method + "/" + metric);
  return *it;
}

fs::path fresh_dir(const std::string & name)
{
  const fs::path p = fs::temp_directory_path() / ("ctxsafe_test_" + name);
  fs::remove_all(p);
  return p;
}

int count_lines(const fs::path & p)
{
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST(MeanStd, Examples)
{
  const MetricStat a = mean_std({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(a.mean, 2.0);
  EXPECT_DOUBLE_EQ(a.std, 1.0);
  const MetricStat b = mean_std({2, 4, 4, 4, 5, 5, 7, 9});
  EXPECT_DOUBLE_EQ(b.mean, 5.0);
  EXPECT_DOUBLE_EQ(b.std, std::sqrt(32.0 / 7.0));
  const MetricStat one = mean_std({7.5});
  EXPECT_EQ(one.mean, 7.5);
  EXPECT_EQ(one.std, 0.0);
  EXPECT_EQ(mean_std({}).mean, 0.0);
}

TEST(MethodSpec, Validation)
{
  MethodSpec m = adaptive_method(kCB, 1.0);
  EXPECT_NO_THROW(m.validate());
  m.constraint_set = 0;
  EXPECT_THROW(m.validate(), ConfigError);
  MethodSpec f = fixed_method(1.0);
  EXPECT_NO_THROW(f.validate());
  f.constraint_set = kCB;
  EXPECT_THROW(f.validate(), ConfigError);
  MethodSpec neg = adaptive_method(kSH, -1.0);
  EXPECT_THROW(neg.validate(), ConfigError);
  EXPECT_NO_THROW(unconstrained_method().validate());
}

TEST(ExperimentMethods, RosterPerExperiment)
{
  const Config c;
  const auto main = experiment_methods(Experiment::kMain, c);
  ASSERT_EQ(main.size(), 3u);
  EXPECT_FALSE(main[0].shield_enabled);
  EXPECT_TRUE(main[1].fixed_constraints);
  EXPECT_EQ(main[2].constraint_set, kAllConstraints);

  const auto port = experiment_methods(Experiment::kPortability, c);
  ASSERT_EQ(port.size(), 4u);
  int heuristic = 0;
  int shielded = 0;
  for (const auto & m : port) {
    heuristic += m.backbone == Backbone::kHeuristic ? 1 : 0;
    shielded += m.shield_enabled ? 1 : 0;
  }
  EXPECT_EQ(heuristic, 2);
  EXPECT_EQ(shielded, 2);

  const auto abl = experiment_methods(Experiment::kAblation, c);
  ASSERT_EQ(abl.size(), 7u);
  std::set<int> sets;
  for (const auto & m : abl) sets.insert(m.constraint_set);
  EXPECT_EQ(sets.size(), 7u);
  EXPECT_FALSE(sets.contains(0));

  EXPECT_EQ(parse_experiment("c5"), Experiment::kAblation);
  EXPECT_EQ(parse_experiment("C8_main"), Experiment::kMain);
  EXPECT_FALSE(parse_experiment("c9").has_value());
}

TEST(Metrics, FromSteps)
{
  const EpisodeRecord r = synthetic_record("m", 1, 0, {1.0, 0.5, -0.25, 2.0}, 2);
  std::vector<StepLog> steps = r.steps;
  steps[1].intervened = true;
  steps[3].infeasible = true;
  steps[0].clearance = 3.0;
  const RunMetrics m = metrics_from_steps(steps, 1.5);
  EXPECT_EQ(m.violation_count, 2);
  EXPECT_DOUBLE_EQ(m.total_reward, 3.25);
  EXPECT_DOUBLE_EQ(m.cumulative_cost, 2.0);
  EXPECT_DOUBLE_EQ(m.clearance, 3.0);
  EXPECT_DOUBLE_EQ(m.intervention_rate, 0.25);
  EXPECT_EQ(m.infeasible_steps, 1);
  EXPECT_TRUE(m.budget_overrun);
  EXPECT_FALSE(metrics_from_steps(steps, 2.0).budget_overrun);
  EXPECT_THROW(metric_value(m, "speed"), std::invalid_argument);
}

TEST(Aggregate, MeanAndStdPerGroup)
{
  std::vector<EpisodeRecord> recs = {
    synthetic_record("a", 1, 0, {1.0, 0.0, 0.0}, 1), synthetic_record("a", 2, 0, {2.0, 0.0, 0.0}, 2),
    synthetic_record("a", 3, 0, {3.0, 0.0, 0.0}, 3), synthetic_record("b", 1, 0, {4.0, 4.0}, 0)};
  const auto rows = aggregate_records(recs);
  ASSERT_EQ(rows.size(), 2 * metric_names().size());
  const AggregateRow & v = find_row(rows, "a", "violation_count");
  EXPECT_DOUBLE_EQ(v.mean, 2.0);
  EXPECT_DOUBLE_EQ(v.std, 1.0);
  EXPECT_EQ(v.n, 3);
  const AggregateRow & r = find_row(rows, "b", "total_reward");
  EXPECT_EQ(r.mean, 8.0);
  EXPECT_EQ(r.std, 0.0);
  EXPECT_EQ(r.n, 1);
  EXPECT_EQ(rows.front().method, "a");

  recs.push_back(synthetic_record("a", 2, 0, {9.0}, 0));
  EXPECT_THROW(aggregate_records(recs), std::runtime_error);
}

TEST(Aggregate, IndependentOfRecordOrder)
{
  Rng rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<EpisodeRecord> recs;
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    for (int run = 0; run < 3; ++run) {
      std::vector<double> rewards(5);
      for (double & x : rewards) x = u(rng) * 1e3;
      recs.push_back(synthetic_record(seed % 2 ? "a" : "b", seed, run, rewards, run));
    }
  }
  const auto base = aggregate_records(recs);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(recs.begin(), recs.end(), rng);
    EXPECT_TRUE(same_rows(aggregate_records(recs), base));
  }
}

TEST(RunEpisode, UnshieldedMethodNeverIntervenes)
{
  const Config c = small_config();
  Learner learner(c);
  EpisodeOptions opt;
  opt.seed = 5;
  opt.epsilon = 0.5;
  const EpisodeResult r = run_episode(c, unconstrained_method(), learner, opt);
  EXPECT_EQ(r.metrics.intervention_rate, 0.0);
  EXPECT_EQ(r.metrics.infeasible_steps, 0);
  for (const StepLog & s : r.record.steps) {
    EXPECT_FALSE(s.eval.has_value());
    EXPECT_EQ(s.proposed, s.executed);
  }
  EXPECT_EQ(r.record.header.steps, r.metrics.steps);
  EXPECT_EQ(learner.episodes_seen, 1);
}

TEST(RunEpisode, DeterministicForAGivenSeed)
{
  const Config c = small_config();
  const MethodSpec m = full_method(c);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Learner a(c);
    Learner b(c);
    EpisodeOptions opt;
    opt.seed = seed;
    opt.epsilon = 0.3;
    const EpisodeResult ra = run_episode(c, m, a, opt);
    const EpisodeResult rb = run_episode(c, m, b, opt);
    ASSERT_EQ(ra.record.steps.size(), rb.record.steps.size());
    for (std::size_t i = 0; i < ra.record.steps.size(); ++i) {
      EXPECT_EQ(step_to_json_line(ra.record.steps[i]), step_to_json_line(rb.record.steps[i]));
    }
    EXPECT_EQ(a.q, b.q);
  }
}

TEST(RunEpisode, FullShieldOnQuietRoadHasNoViolations)
{
  const Config c = quiet_config();
  const MethodSpec m = full_method(c);
  std::vector<EpisodeRecord> recs;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Learner learner(c);
    EpisodeOptions opt;
    opt.seed = seed;
    opt.condition = Condition::kStationary;
    opt.epsilon = 1.0;
    const EpisodeResult r = run_episode(c, m, learner, opt);
    EXPECT_EQ(r.metrics.violation_count, 0) << seed;
    recs.push_back(r.record);
  }
  const AuditReport audit = audit_records(recs);
  EXPECT_TRUE(audit.ok()) << audit.failures.front();
  EXPECT_EQ(audit.shielded_steps, audit.steps_checked);
}

TEST(RunEpisode, ForcedActionsAreProposed)
{
  const Config c = quiet_config();
  Learner learner(c);
  EpisodeOptions opt;
  opt.seed = 9;
  opt.forced_actions = {Action::kSlower, Action::kIdle, Action::kFaster};
  const EpisodeResult r = run_episode(c, unconstrained_method(), learner, opt);
  ASSERT_GE(r.record.steps.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.record.steps[i].executed, opt.forced_actions[i]);
}

// With lambda = 0 and the shield off, the loop is plain tabular Q-learning on
// the discretized observation. The oracle reproduces it from the environment
// and the agent-stream draws alone.
TEST(RunEpisode, LambdaZeroUnshieldedIsPlainQLearning)
{
  const Config c = small_config();
  const MergeEnv env(c.env);
  const double lr = c.agent.lr;
  const double gamma = c.agent.gamma;
  std::vector<std::array<double, kNumActions>> table(kNumObsKeys);
  for (auto & row : table) row.fill(c.agent.q_init);
  auto argmax = [](const std::array<double, kNumActions> & row) {
    int best = 0;
    for (int a = 1; a < kNumActions; ++a) {
      if (row[a] > row[best]) best = a;
    }
    return best;
  };

  Learner learner(c);
  const double eps = 0.25;
  for (std::uint64_t seed = 40; seed < 46; ++seed) {
    EpisodeOptions opt;
    opt.seed = seed;
    opt.epsilon = eps;
    opt.condition = Condition::kSeen;
    const EpisodeResult r = run_episode(c, unconstrained_method(), learner, opt);

    EnvState state = env.reset(Condition::kSeen, seed);
    Rng rng(derive_seed(seed, kAgentStream, 0));
    InteractionHistory history(static_cast<std::size_t>(c.context.history_capacity));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    int prev_key = -1;
    int prev_action = 0;
    double prev_reward = 0.0;
    std::size_t t = 0;
    while (!state.terminated) {
      const Observation obs = env.observe(state, rng);
      const double noise = c.context.detect_noise[static_cast<std::size_t>(state.true_context.noise)];
      const int key = discretize(obs, detect_context(history, state.true_context, noise, rng)).flat();
      if (prev_key >= 0) {
        double & q = table[prev_key][prev_action];
        q += lr * (prev_reward + gamma * *std::max_element(table[key].begin(), table[key].end()) - q);
      }
      const int action = unit(rng) < eps ? pick(rng) : argmax(table[key]);
      StepOutcome out = env.step(state, static_cast<Action>(action));
      ASSERT_LT(t, r.record.steps.size());
      EXPECT_EQ(to_index(r.record.steps[t].executed), action);
      EXPECT_EQ(r.record.steps[t].reward, out.reward);
      HistoryRecord h;
      h.violation = out.hard_violation;
      history.push(h);
      if (out.terminated) {
        double & q = table[key][action];
        q += lr * (out.reward - q);
      }
      prev_key = key;
      prev_action = action;
      prev_reward = out.reward;
      state = std::move(out.next_state);
      ++t;
    }
    EXPECT_EQ(t, r.record.steps.size());
  }
  for (int k = 0; k < kNumObsKeys; ++k) {
    for (Action a : kAllActions) {
      ASSERT_EQ(learner.q.value(DiscreteObsKey::from_flat(k), a), table[k][to_index(a)]) << k;
    }
  }
}

TEST(Audit, DetectsTampering)
{
  const Config c = small_config();
  const MethodSpec m = full_method(c);
  Learner learner(c);
  EpisodeOptions opt;
  opt.seed = 21;
  opt.epsilon = 1.0;
  const EpisodeRecord clean = run_episode(c, m, learner, opt).record;
  ASSERT_TRUE(audit_records({clean}).ok());
  ASSERT_GT(clean.steps.size(), 3u);

  EpisodeRecord bad_h = clean;
  bad_h.steps[2].eval->h += 0.5;
  EXPECT_FALSE(audit_records({bad_h}).ok());

  EpisodeRecord bad_budget = clean;
  bad_budget.steps[3].budget_remaining += 1e-6;
  EXPECT_FALSE(audit_records({bad_budget}).ok());

  EpisodeRecord bad_final = clean;
  bad_final.header.budget_final -= 0.01;
  EXPECT_FALSE(audit_records({bad_final}).ok());

  EpisodeRecord bad_flag = clean;
  bad_flag.steps[1].intervened = !bad_flag.steps[1].intervened;
  EXPECT_FALSE(audit_records({bad_flag}).ok());

  EpisodeRecord bad_exec = clean;
  bad_exec.steps[0].infeasible = false;
  bad_exec.steps[0].eval->g_cb = 0.3;
  bad_exec.steps[0].eval->h = std::max({0.3, bad_exec.steps[0].eval->g_as, bad_exec.steps[0].eval->g_sh});
  EXPECT_FALSE(audit_records({bad_exec}).ok());

  EpisodeRecord missing = clean;
  missing.steps.back().eval.reset();
  EXPECT_FALSE(audit_records({missing}).ok());

  EpisodeRecord stationary = clean;
  stationary.header.condition = "stationary";
  stationary.steps[1].true_context = Context{stationary.steps[0].true_context.density == 0 ? 1 : 0,
                                             stationary.steps[0].true_context.behavior,
                                             stationary.steps[0].true_context.noise};
  EXPECT_FALSE(audit_records({stationary}).ok());
}

TEST(Experiment, RowCountsAndValidation)
{
  Config c = small_config();
  c.harness.train_episodes = 2;
  EXPECT_THROW(run_experiment(Experiment::kMain, c, Condition::kUnseen, {1}, 1), ConfigError);
  EXPECT_THROW(run_experiment(Experiment::kMain, c, Condition::kUnseen, {1, 2}, 0), ConfigError);

  const std::pair<Experiment, std::size_t> cases[] = {
    {Experiment::kMain, 3}, {Experiment::kPortability, 4}, {Experiment::kAblation, 7}};
  for (const auto & [e, methods] : cases) {
    const ExperimentResult r = run_experiment(e, c, Condition::kUnseen, {1, 2}, 2);
    EXPECT_EQ(r.rows.size(), methods * 7) << experiment_name(e);
    EXPECT_EQ(r.records.size(), methods * 4);
    for (const AggregateRow & row : r.rows) EXPECT_EQ(row.n, 4);
    EXPECT_TRUE(same_rows(aggregate_records(r.records), r.rows));
  }
}

TEST(Persistence, WriteAndReadBack)
{
  Config c = small_config();
  c.harness.train_episodes = 2;
  const ExperimentResult r = run_experiment(Experiment::kMain, c, Condition::kUnseen, {3, 4}, 1);
  const fs::path dir = fresh_dir("persist");
  write_outputs(r.rows, r.records, c, dir);

  EXPECT_TRUE(fs::exists(dir / "config_resolved.json"));
  EXPECT_EQ(count_lines(dir / "summary.csv"), static_cast<int>(r.rows.size()) + 1);
  const std::vector<AggregateRow> csv = read_summary_csv(dir / "summary.csv");
  EXPECT_TRUE(same_rows(csv, r.rows));

  const std::vector<EpisodeRecord> back = read_run_dir(dir);
  ASSERT_EQ(back.size(), r.records.size());
  for (const EpisodeRecord & rec : back) {
    EXPECT_EQ(count_lines(dir / "runs" / run_file_name(rec.header)), rec.header.steps + 1);
    EXPECT_EQ(rec.header.steps, static_cast<int>(rec.steps.size()));
  }
  EXPECT_TRUE(same_rows(aggregate_records(back), r.rows));
  EXPECT_TRUE(audit_records(back).ok());
  for (const EpisodeRecord & orig : r.records) {
    const auto it = std::find_if(back.begin(), back.end(), [&](const EpisodeRecord & x) {
      return run_file_name(x.header) == run_file_name(orig.header);
    });
    ASSERT_NE(it, back.end());
    for (std::size_t i = 0; i < orig.steps.size(); ++i) {
      EXPECT_EQ(step_to_json_line(it->steps[i]), step_to_json_line(orig.steps[i]));
    }
  }
  fs::remove_all(dir);
}

TEST(Persistence, EmptyRowsGiveHeaderOnlyCsv)
{
  const fs::path dir = fresh_dir("empty");
  fs::create_directories(dir);
  write_summary_csv({}, dir / "summary.csv");
  EXPECT_EQ(count_lines(dir / "summary.csv"), 1);
  EXPECT_TRUE(read_summary_csv(dir / "summary.csv").empty());
  fs::remove_all(dir);
}

TEST(Config, NestedAndDottedKeys)
{
  const Config a = config_from_json(nlohmann::json::parse(R"({"phi": {"alpha": 0.7}, "agent.lr": 0.3})"));
  EXPECT_EQ(a.constraint.alpha, 0.7);
  EXPECT_EQ(a.agent.lr, 0.3);
  const Config b = config_from_json(nlohmann::json::parse(R"({"env": {"idm": {"desired_speed": [20, 25, 30]}}})"));
  EXPECT_EQ(b.env.idm[2].desired_speed, 30.0);
  EXPECT_EQ(b.env.idm[0].time_headway, Config{}.env.idm[0].time_headway);
}

TEST(Config, RejectsBadInput)
{
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"phi.gamma": 1})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"phi": {"alpha": 1}, "phi.alpha": 2})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"harness.budget": -1})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"harness.fixed_context": [1, 3, 1]})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse("[1, 2]")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/ctxsafe.json"), ConfigError);
}

TEST(Config, ResolvedDocumentRoundTrips)
{
  Config c;
  c.agent.gamma = 0.9;
  c.env.density_counts = {2, 5, 9};
  c.harness.base_seed = 12345678901234ULL;
  const auto doc = config_to_json(c);
  const Config back = config_from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(config_to_json(back).dump(), doc.dump());
  EXPECT_EQ(back.harness.base_seed, c.harness.base_seed);
}
