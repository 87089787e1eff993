#include "ctxsafe/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace ctxsafe
{

namespace
{

using ojson = nlohmann::ordered_json;

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ojson context_json(const Context & c) { return ojson::array({c.density, c.behavior, c.noise}); }

Context context_from_json(const nlohmann::json & j)
{
  const auto v = j.get<std::array<int, 3>>();
  Context c{v[0], v[1], v[2]};
  if (!c.valid()) throw std::runtime_error("invalid context in log");
  return c;
}

std::string format_double(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index)
{
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

std::string_view backbone_name(Backbone b)
{
  return b == Backbone::kTabular ? "tabular" : "heuristic";
}

void MethodSpec::validate() const
{
  if (name.empty()) throw ConfigError("method name must not be empty");
  if (!(lambda >= 0.0)) throw ConfigError("method '" + name + "': lambda must be nonnegative");
  if (constraint_set == 0 && shield_enabled) {
    throw ConfigError("method '" + name + "': shield enabled without constraints");
  }
  if (fixed_constraints && constraint_set != (kCB | kSH)) {
    throw ConfigError("method '" + name + "': fixed constraints use exactly CB+SH");
  }
}

MethodSpec unconstrained_method(Backbone backbone)
{
  MethodSpec m;
  m.name = backbone == Backbone::kTabular ? "unconstrained" : "heuristic_unshielded";
  m.backbone = backbone;
  m.shield_enabled = false;
  m.constraint_set = 0;
  m.lambda = 0.0;
  return m;
}

MethodSpec fixed_method(double lambda)
{
  MethodSpec m;
  m.name = "fixed";
  m.shield_enabled = true;
  m.constraint_set = kCB | kSH;
  m.lambda = lambda;
  m.fixed_constraints = true;
  return m;
}

MethodSpec adaptive_method(std::uint8_t constraint_set, double lambda, Backbone backbone)
{
  MethodSpec m;
  m.name = constraint_set_name(constraint_set);
  m.backbone = backbone;
  m.shield_enabled = true;
  m.constraint_set = constraint_set;
  m.lambda = lambda;
  return m;
}

std::string_view experiment_name(Experiment e)
{
  switch (e) {
    case Experiment::kMain:
      return "c8";
    case Experiment::kPortability:
      return "c7";
    case Experiment::kAblation:
      return "c5";
  }
  return "unknown";
}

std::optional<Experiment> parse_experiment(std::string_view name)
{
  if (name == "c8" || name == "C8_main") return Experiment::kMain;
  if (name == "c7" || name == "C7_portability") return Experiment::kPortability;
  if (name == "c5" || name == "C5_ablation") return Experiment::kAblation;
  return std::nullopt;
}

std::vector<MethodSpec> experiment_methods(Experiment e, const Config & config)
{
  const double lambda = config.agent.lambda;
  switch (e) {
    case Experiment::kMain: {
      MethodSpec full = adaptive_method(kAllConstraints, lambda);
      full.name = "full_adaptive";
      return {unconstrained_method(), fixed_method(lambda), full};
    }
    case Experiment::kPortability: {
      MethodSpec tab_off = unconstrained_method(Backbone::kTabular);
      tab_off.name = "tabular_unshielded";
      MethodSpec tab_on = adaptive_method(kAllConstraints, lambda, Backbone::kTabular);
      tab_on.name = "tabular_shielded";
      MethodSpec heu_off = unconstrained_method(Backbone::kHeuristic);
      MethodSpec heu_on = adaptive_method(kAllConstraints, lambda, Backbone::kHeuristic);
      heu_on.name = "heuristic_shielded";
      return {tab_off, tab_on, heu_off, heu_on};
    }
    case Experiment::kAblation: {
      std::vector<MethodSpec> out;
      const std::uint8_t sets[] = {kCB, kAS, kSH, kCB | kAS, kCB | kSH, kAS | kSH, kAllConstraints};
      for (std::uint8_t set : sets) {
        out.push_back(adaptive_method(set, lambda));
      }
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------

RunMetrics metrics_from_steps(const std::vector<StepLog> & steps, double budget_total)
{
  RunMetrics m;
  int interventions = 0;
  for (const StepLog & s : steps) {
    m.violation_count += s.violation ? 1 : 0;
    m.total_reward += s.reward;
    m.cumulative_cost += s.cost;
    m.clearance += s.clearance;
    interventions += s.intervened ? 1 : 0;
    m.infeasible_steps += s.infeasible ? 1 : 0;
  }
  m.steps = static_cast<int>(steps.size());
  m.intervention_rate = steps.empty() ? 0.0 : static_cast<double>(interventions) / m.steps;
  m.budget_overrun = budget_total - m.cumulative_cost < 0.0;
  return m;
}

double metric_value(const RunMetrics & m, const std::string & name)
{
  if (name == "violation_count") return m.violation_count;
  if (name == "total_reward") return m.total_reward;
  if (name == "cumulative_cost") return m.cumulative_cost;
  if (name == "clearance") return m.clearance;
  if (name == "intervention_rate") return m.intervention_rate;
  if (name == "infeasible_steps") return m.infeasible_steps;
  if (name == "budget_overrun") return m.budget_overrun ? 1.0 : 0.0;
  throw std::invalid_argument("unknown metric '" + name + "'");
}

MetricStat mean_std(const std::vector<double> & values)
{
  MetricStat s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return s;
}

std::vector<AggregateRow> aggregate_records(const std::vector<EpisodeRecord> & records)
{
  using GroupKey = std::tuple<std::string, std::string, std::string>;
  std::vector<GroupKey> order;
  using RunKey = std::pair<std::uint64_t, int>;
  std::map<GroupKey, std::map<RunKey, RunMetrics>> groups;
  for (const EpisodeRecord & r : records) {
    GroupKey key{r.header.experiment, r.header.method, r.header.condition};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    // Runs are summed in (seed, run) order whatever order the records arrive in.
    const RunKey run{r.header.seed, r.header.run};
    if (!it->second.emplace(run, metrics_from_steps(r.steps, r.header.budget_total)).second) {
      throw std::runtime_error("duplicate run " + run_file_name(r.header));
    }
  }
  std::vector<AggregateRow> rows;
  for (const GroupKey & key : order) {
    const auto & runs = groups.at(key);
    for (const std::string & metric : metric_names()) {
      std::vector<double> values;
      values.reserve(runs.size());
      for (const auto & [run, m] : runs) values.push_back(metric_value(m, metric));
      const MetricStat st = mean_std(values);
      rows.push_back(AggregateRow{
        std::get<0>(key), std::get<1>(key), std::get<2>(key), metric, st.mean, st.std,
        static_cast<int>(runs.size())});
    }
  }
  return rows;
}

bool same_rows(std::vector<AggregateRow> a, std::vector<AggregateRow> b)
{
  auto by_key = [](const AggregateRow & x, const AggregateRow & y) {
    return std::tie(x.experiment, x.method, x.condition, x.metric) <
           std::tie(y.experiment, y.method, y.condition, y.metric);
  };
  std::sort(a.begin(), a.end(), by_key);
  std::sort(b.begin(), b.end(), by_key);
  return a == b;
}

// ---------------------------------------------------------------------------

Learner::Learner(const Config & config)
: q(config.agent.lr, config.agent.gamma, config.agent.q_init),
  transitions(config.context.self_prior),
  adaptation(
    config.context.default_cap, static_cast<std::size_t>(config.context.recovery_window),
    config.context.epsilon)
{
}

EpisodeResult run_episode(
  const Config & config, const MethodSpec & method, Learner & learner, const EpisodeOptions & options)
{
  const MergeEnv env(config.env);
  return run_episode_from(config, method, learner, options, env.reset(options.condition, options.seed));
}

EpisodeResult run_episode_from(
  const Config & config, const MethodSpec & method, Learner & learner, const EpisodeOptions & options,
  EnvState state)
{
  method.validate();
  const MergeEnv env(config.env);
  Rng rng(derive_seed(options.seed, kAgentStream, 0));

  const ConstraintBuilder builder =
    method.fixed_constraints
      ? ConstraintBuilder::fixed(
          config.threshold_table(), config.fixed_context(),
          config.harness.budget / config.env.episode_length)
      : ConstraintBuilder(config.threshold_table(), config.constraint, method.constraint_set);
  const DiscrepancyWeights weights = config.context.discrepancy_weights();

  InteractionHistory history(static_cast<std::size_t>(config.context.history_capacity));
  SafetyBudget budget = SafetyBudget::with_total(config.harness.budget);
  std::optional<Context> prev_detected;
  std::optional<Transition> pending;

  EpisodeResult result;
  RunHeader & header = result.record.header;
  header.method = method.name;
  header.condition = condition_name(options.condition);
  header.seed = options.seed;
  header.backbone = backbone_name(method.backbone);
  header.shield_enabled = method.shield_enabled;
  header.constraint_set = constraint_set_name(method.constraint_set);
  header.fixed_constraints = method.fixed_constraints;
  header.budget_total = budget.total;

  auto learn = [&](Transition & t) {
    if (options.learn && method.backbone == Backbone::kTabular) learner.q.update(t, method.lambda);
  };

  while (!state.terminated) {
    const int t = state.time_step;
    const Observation obs = env.observe(state, rng);
    const double noise_prob =
      config.context.detect_noise[static_cast<std::size_t>(state.true_context.noise)];
    const Context detected = detect_context(history, state.true_context, noise_prob, rng);
    if (prev_detected && *prev_detected != detected) {
      learner.transitions.update(*prev_detected, detected);
      learner.adaptation.on_context_shift(context_discrepancy(*prev_detected, detected, weights));
    }
    prev_detected = detected;

    const ContextForecast forecast = predict_context(learner.transitions, detected, config.context.horizon);
    const double v_req = required_speed(forecast, detected, weights);
    const double v_cap = learner.adaptation.v_cap();
    const double rho = adaptation_ratio(v_req, v_cap, learner.adaptation.epsilon());

    const DiscreteObsKey key = discretize(obs, detected);
    if (pending) {
      pending->next_key = key;
      learn(*pending);
      pending.reset();
    }

    Action proposed = Action::kIdle;
    if (static_cast<std::size_t>(t) < options.forced_actions.size()) {
      proposed = options.forced_actions[static_cast<std::size_t>(t)];
    } else if (method.backbone == Backbone::kTabular) {
      proposed = learner.q.select_action(key, options.epsilon, rng);
    } else {
      proposed = heuristic_policy(obs, config.agent.heuristic);
    }

    StepLog log;
    log.t = t;
    log.true_context = state.true_context;
    log.detected = detected;
    log.proposed = proposed;
    log.executed = proposed;
    log.rho = rho;
    log.v_req = v_req;
    log.v_cap = v_cap;
    log.risk = forecast.risk;

    if (method.shield_enabled) {
      ConstraintInputs in;
      in.current = detected;
      in.forecast = &forecast;
      in.budget = budget;
      in.remaining_steps = std::max(1, state.episode_length - t);
      in.rho = rho;
      const StepConstraints step = builder.prepare(in);
      ActionEvals evals;
      for (Action a : kAllActions) {
        evals[a] = evaluate(step, [&] { return env.predict_margins(state, a, detected); });
      }
      const ShieldDecision d = filter(proposed, std::move(evals));
      log.executed = d.executed;
      log.intervened = d.intervened;
      log.infeasible = d.infeasible;
      log.eval = d.evals.at(d.executed);
      learner.adaptation.on_step(!d.infeasible, d.intervened);
    } else {
      learner.adaptation.on_step(true, false);
    }

    log.budget_remaining = budget.remaining();
    StepOutcome out = env.step(state, log.executed);
    budget = charge_budget(budget, out.cost);

    log.reward = out.reward;
    log.cost = out.cost;
    log.violation = out.hard_violation;
    log.collision = out.collision;
    log.clearance = out.clearance_increment;

    HistoryRecord hr;
    hr.time_step = t;
    hr.front_gap = obs.own().front_gap;
    hr.speed = obs.ego_speed;
    hr.action = log.executed;
    hr.reward = out.reward;
    hr.cost = out.cost;
    hr.observed_context = detected;
    hr.fallback = log.intervened || log.infeasible;
    hr.violation = out.hard_violation;
    history.push(hr);

    Transition tr;
    tr.key = key;
    tr.action = log.executed;
    tr.reward = out.reward;
    tr.cost = out.cost;
    if (log.eval) tr.eval = *log.eval;
    tr.next_key = key;
    tr.terminal = out.terminated;
    if (out.terminated) {
      learn(tr);
    } else {
      pending = tr;
    }

    result.record.steps.push_back(std::move(log));
    state = std::move(out.next_state);
  }

  ++learner.episodes_seen;
  header.budget_final = budget.remaining();
  header.steps = static_cast<int>(result.record.steps.size());
  result.metrics = metrics_from_steps(result.record.steps, header.budget_total);
  return result;
}

ExperimentResult run_experiment(
  Experiment experiment, const Config & config, Condition condition,
  const std::vector<std::uint64_t> & seeds, int runs_per_seed)
{
  if (seeds.size() < 2) throw ConfigError("an experiment needs at least two seeds");
  if (runs_per_seed < 1) throw ConfigError("runs_per_seed must be >= 1");
  config.validate();

  ExperimentResult result;
  const EpsilonSchedule eps = config.agent.schedule();
  for (const MethodSpec & method : experiment_methods(experiment, config)) {
    for (std::uint64_t seed : seeds) {
      Learner learner(config);
      for (int i = 0; i < config.harness.train_episodes; ++i) {
        EpisodeOptions opt;
        opt.condition = Condition::kSeen;
        opt.seed = derive_seed(seed, kTrainStream, static_cast<std::uint64_t>(i));
        opt.epsilon = eps.at(i);
        run_episode(config, method, learner, opt);
      }
      for (int r = 0; r < runs_per_seed; ++r) {
        Learner copy = learner;
        EpisodeOptions opt;
        opt.condition = condition;
        opt.seed = derive_seed(seed, kEvalStream, static_cast<std::uint64_t>(r));
        opt.epsilon = config.agent.eps_eval;
        EpisodeResult er = run_episode(config, method, copy, opt);
        er.record.header.experiment = experiment_name(experiment);
        er.record.header.seed = seed;
        er.record.header.run = r;
        result.records.push_back(std::move(er.record));
      }
    }
  }
  result.rows = aggregate_records(result.records);
  return result;
}

// ---------------------------------------------------------------------------

std::string header_to_json_line(const RunHeader & h)
{
  ojson j;
  j["type"] = "header";
  j["experiment"] = h.experiment;
  j["method"] = h.method;
  j["condition"] = h.condition;
  j["seed"] = h.seed;
  j["run"] = h.run;
  j["backbone"] = h.backbone;
  j["shield_enabled"] = h.shield_enabled;
  j["constraint_set"] = h.constraint_set;
  j["fixed_constraints"] = h.fixed_constraints;
  j["budget_total"] = h.budget_total;
  j["budget_final"] = h.budget_final;
  j["steps"] = h.steps;
  return j.dump();
}

std::string step_to_json_line(const StepLog & s)
{
  ojson j;
  j["t"] = s.t;
  j["true_context"] = context_json(s.true_context);
  j["detected"] = context_json(s.detected);
  j["proposed"] = action_name(s.proposed);
  j["executed"] = action_name(s.executed);
  j["intervened"] = s.intervened;
  j["infeasible"] = s.infeasible;
  if (s.eval) {
    j["tau"] = s.eval->tau;
    j["h_executed"] = s.eval->h;
    j["g_cb"] = s.eval->g_cb;
    j["g_as"] = s.eval->g_as;
    j["g_sh"] = s.eval->g_sh;
    j["expected_cost"] = s.eval->expected_cost;
    j["eval_error"] = s.eval->error;
  } else {
    for (const char * k : {"tau", "h_executed", "g_cb", "g_as", "g_sh", "expected_cost", "eval_error"}) {
      j[k] = nullptr;
    }
  }
  j["budget_remaining"] = s.budget_remaining;
  j["rho"] = s.rho;
  j["v_req"] = s.v_req;
  j["v_cap"] = s.v_cap;
  j["risk"] = s.risk;
  j["reward"] = s.reward;
  j["cost"] = s.cost;
  j["violation"] = s.violation;
  j["collision"] = s.collision;
  j["clearance"] = s.clearance;
  return j.dump();
}

std::string run_file_name(const RunHeader & h)
{
  std::string method = h.method;
  std::replace(method.begin(), method.end(), '+', '-');
  return h.experiment + "__" + method + "__" + h.condition + "__seed" + std::to_string(h.seed) + "__run" +
         std::to_string(h.run) + ".jsonl";
}

void write_summary_csv(const std::vector<AggregateRow> & rows, const std::filesystem::path & path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "experiment,method,condition,metric,mean,std,n\n";
  for (const AggregateRow & r : rows) {
    out << r.experiment << ',' << r.method << ',' << r.condition << ',' << r.metric << ','
        << format_double(r.mean) << ',' << format_double(r.std) << ',' << r.n << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<AggregateRow> read_summary_csv(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "experiment,method,condition,metric,mean,std,n") {
    throw std::runtime_error(path.string() + ": unexpected CSV header");
  }
  std::vector<AggregateRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) cols.push_back(col);
    if (cols.size() != 7) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    }
    AggregateRow r;
    r.experiment = cols[0];
    r.method = cols[1];
    r.condition = cols[2];
    r.metric = cols[3];
    r.mean = std::strtod(cols[4].c_str(), nullptr);
    r.std = std::strtod(cols[5].c_str(), nullptr);
    r.n = std::stoi(cols[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_outputs(
  const std::vector<AggregateRow> & rows, const std::vector<EpisodeRecord> & records, const Config & config,
  const std::filesystem::path & out_dir)
{
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "runs", ec);
  if (ec) throw std::runtime_error("cannot create " + (out_dir / "runs").string() + ": " + ec.message());

  write_summary_csv(rows, out_dir / "summary.csv");

  for (const EpisodeRecord & r : records) {
    const fs::path path = out_dir / "runs" / run_file_name(r.header);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << header_to_json_line(r.header) << '\n';
    for (const StepLog & s : r.steps) out << step_to_json_line(s) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
  }

  const fs::path cfg_path = out_dir / "config_resolved.json";
  std::ofstream cfg(cfg_path, std::ios::binary);
  if (!cfg) throw std::runtime_error("cannot write " + cfg_path.string());
  cfg << config_to_json(config).dump(2) << '\n';
}

EpisodeRecord read_run_file(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  EpisodeRecord rec;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string & what) {
    return std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  try {
    if (!std::getline(in, line)) throw fail("empty run file");
    ++lineno;
    const auto h = nlohmann::json::parse(line);
    if (h.value("type", "") != "header") throw fail("first line is not a header");
    rec.header.experiment = h.at("experiment").get<std::string>();
    rec.header.method = h.at("method").get<std::string>();
    rec.header.condition = h.at("condition").get<std::string>();
    rec.header.seed = h.at("seed").get<std::uint64_t>();
    rec.header.run = h.at("run").get<int>();
    rec.header.backbone = h.at("backbone").get<std::string>();
    rec.header.shield_enabled = h.at("shield_enabled").get<bool>();
    rec.header.constraint_set = h.at("constraint_set").get<std::string>();
    rec.header.fixed_constraints = h.at("fixed_constraints").get<bool>();
    rec.header.budget_total = h.at("budget_total").get<double>();
    rec.header.budget_final = h.at("budget_final").get<double>();
    rec.header.steps = h.at("steps").get<int>();

    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      StepLog s;
      s.t = j.at("t").get<int>();
      s.true_context = context_from_json(j.at("true_context"));
      s.detected = context_from_json(j.at("detected"));
      const auto proposed = parse_action(j.at("proposed").get<std::string>());
      const auto executed = parse_action(j.at("executed").get<std::string>());
      if (!proposed || !executed) throw fail("unknown action name");
      s.proposed = *proposed;
      s.executed = *executed;
      s.intervened = j.at("intervened").get<bool>();
      s.infeasible = j.at("infeasible").get<bool>();
      if (!j.at("h_executed").is_null()) {
        ConstraintEval e;
        e.tau = j.at("tau").get<double>();
        e.h = j.at("h_executed").get<double>();
        e.g_cb = j.at("g_cb").get<double>();
        e.g_as = j.at("g_as").get<double>();
        e.g_sh = j.at("g_sh").get<double>();
        e.expected_cost = j.at("expected_cost").get<double>();
        e.error = j.at("eval_error").get<bool>();
        e.admissible = e.h <= 0.0;
        s.eval = e;
      }
      s.budget_remaining = j.at("budget_remaining").get<double>();
      s.rho = j.at("rho").get<double>();
      s.v_req = j.at("v_req").get<double>();
      s.v_cap = j.at("v_cap").get<double>();
      s.risk = j.at("risk").get<double>();
      s.reward = j.at("reward").get<double>();
      s.cost = j.at("cost").get<double>();
      s.violation = j.at("violation").get<bool>();
      s.collision = j.at("collision").get<bool>();
      s.clearance = j.at("clearance").get<double>();
      rec.steps.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception & e) {
    throw fail(e.what());
  }
  return rec;
}

std::vector<EpisodeRecord> read_run_dir(const std::filesystem::path & dir)
{
  namespace fs = std::filesystem;
  fs::path runs = dir;
  if (fs::is_directory(dir / "runs")) runs = dir / "runs";
  if (!fs::is_directory(runs)) throw std::runtime_error("not a log directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto & entry : fs::directory_iterator(runs)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EpisodeRecord> out;
  out.reserve(files.size());
  for (const auto & f : files) out.push_back(read_run_file(f));
  return out;
}

// ---------------------------------------------------------------------------

AuditReport audit_records(const std::vector<EpisodeRecord> & records, double budget_tolerance)
{
  AuditReport report;
  for (const EpisodeRecord & rec : records) {
    ++report.runs;
    const std::string tag = run_file_name(rec.header);
    auto fail = [&](int t, const std::string & what) {
      report.failures.push_back(tag + " step " + std::to_string(t) + ": " + what);
    };
    if (rec.header.steps != static_cast<int>(rec.steps.size())) {
      fail(-1, "header step count does not match the log");
    }
    const bool sh_active = rec.header.constraint_set.find("SH") != std::string::npos;
    double spent = 0.0;
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
      const StepLog & s = rec.steps[i];
      ++report.steps_checked;
      if (s.intervened != (s.proposed != s.executed)) fail(s.t, "intervened flag disagrees with actions");

      if (std::abs(s.budget_remaining - (rec.header.budget_total - spent)) > budget_tolerance) {
        fail(s.t, "budget_remaining != d - sum of earlier costs");
      }
      spent += s.cost;
      if (i + 1 == rec.steps.size() &&
          std::abs(rec.header.budget_final - (rec.header.budget_total - spent)) > budget_tolerance) {
        fail(s.t, "final budget != d - cumulative cost");
      }

      if (rec.header.shield_enabled) {
        if (!s.eval) {
          fail(s.t, "shielded step without constraint values");
        } else {
          ++report.shielded_steps;
          const ConstraintEval & e = *s.eval;
          if (e.h != std::max({e.g_cb, e.g_as, e.g_sh})) fail(s.t, "h is not the max of g_cb, g_as, g_sh");
          if (!s.infeasible) {
            if (!(e.h <= 0.0)) fail(s.t, "executed action inadmissible (h > 0) on a feasible step");
            if (!(e.g_cb <= 0.0 && e.g_as <= 0.0 && e.g_sh <= 0.0)) {
              fail(s.t, "executed action violates a constraint on a feasible step");
            }
          }
          if (sh_active && e.g_sh <= 0.0 && !(e.expected_cost <= e.tau)) {
            fail(s.t, "g_sh <= 0 but expected cost exceeds tau");
          }
        }
      } else if (s.intervened || s.infeasible) {
        fail(s.t, "unshielded run reports shield activity");
      }

      if (i > 0) {
        const Context & a = rec.steps[i - 1].true_context;
        const Context & b = s.true_context;
        if (a != b) {
          if (rec.header.condition == "stationary") fail(s.t, "context changed under the stationary condition");
          if (rec.header.condition == "seen" && (!is_seen_transition(a, b) || is_held_out_transition(a, b))) {
            fail(s.t, "seen-condition transition " + to_string(a) + "->" + to_string(b) + " is held out");
          }
        }
      }
    }
  }
  return report;
}

}  // namespace ctxsafe
