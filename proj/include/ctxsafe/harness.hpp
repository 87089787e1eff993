#pragma once

#include "ctxsafe/agent.hpp"
#include "ctxsafe/config.hpp"
#include "ctxsafe/constraints.hpp"
#include "ctxsafe/context_model.hpp"
#include "ctxsafe/env_merge.hpp"
#include "ctxsafe/shield.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ctxsafe
{

// Independent random streams of one seed.
inline constexpr std::uint64_t kAgentStream = 0x6167656e74ULL;
inline constexpr std::uint64_t kTrainStream = 0x747261696eULL;
inline constexpr std::uint64_t kEvalStream = 0x6576616cULL;

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

enum class Backbone { kTabular, kHeuristic };

std::string_view backbone_name(Backbone b);

struct MethodSpec
{
  std::string name;
  Backbone backbone = Backbone::kTabular;
  bool shield_enabled = true;
  std::uint8_t constraint_set = kAllConstraints;
  double lambda = 0.0;
  bool fixed_constraints = false;

  /// Throws ConfigError on a combination the harness does not define.
  void validate() const;
};

MethodSpec unconstrained_method(Backbone backbone = Backbone::kTabular);
MethodSpec fixed_method(double lambda);
MethodSpec adaptive_method(std::uint8_t constraint_set, double lambda, Backbone backbone = Backbone::kTabular);

enum class Experiment { kMain, kPortability, kAblation };

std::string_view experiment_name(Experiment e);
std::optional<Experiment> parse_experiment(std::string_view name);

/// Methods compared by an experiment, in output order.
std::vector<MethodSpec> experiment_methods(Experiment e, const Config & config);

// ---------------------------------------------------------------------------
// Logs and metrics

struct StepLog
{
  int t = 0;
  Context true_context;
  Context detected;
  Action proposed = Action::kIdle;
  Action executed = Action::kIdle;
  bool intervened = false;
  bool infeasible = false;
  /// Constraint values of the executed action; empty when the shield is off.
  std::optional<ConstraintEval> eval;
  double rho = 0.0;
  double v_req = 0.0;
  double v_cap = 0.0;
  double risk = 0.0;
  /// B_t at decision time, before this step's cost is charged.
  double budget_remaining = 0.0;
  double reward = 0.0;
  double cost = 0.0;
  bool violation = false;
  bool collision = false;
  double clearance = 0.0;
};

struct RunHeader
{
  std::string experiment;
  std::string method;
  std::string condition;
  std::uint64_t seed = 0;
  int run = 0;
  std::string backbone;
  bool shield_enabled = false;
  std::string constraint_set;
  bool fixed_constraints = false;
  double budget_total = 0.0;
  /// Remaining budget after the last step's charge.
  double budget_final = 0.0;
  int steps = 0;
};

struct EpisodeRecord
{
  RunHeader header;
  std::vector<StepLog> steps;
};

struct RunMetrics
{
  int violation_count = 0;
  double total_reward = 0.0;
  double cumulative_cost = 0.0;
  double clearance = 0.0;
  double intervention_rate = 0.0;
  int infeasible_steps = 0;
  bool budget_overrun = false;
  int steps = 0;
};

/// Metrics are always derived from the step log so a re-aggregation of the
/// written logs reproduces them bit for bit.
RunMetrics metrics_from_steps(const std::vector<StepLog> & steps, double budget_total);

inline const std::vector<std::string> & metric_names()
{
  static const std::vector<std::string> names = {
    "violation_count", "total_reward",     "cumulative_cost", "clearance",
    "intervention_rate", "infeasible_steps", "budget_overrun"};
  return names;
}

double metric_value(const RunMetrics & m, const std::string & name);

struct MetricStat
{
  double mean = 0.0;
  double std = 0.0;
};

/// Sample mean and (n-1)-denominator standard deviation; std is 0 for n < 2.
MetricStat mean_std(const std::vector<double> & values);

struct AggregateRow
{
  std::string experiment;
  std::string method;
  std::string condition;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  int n = 0;

  bool operator==(const AggregateRow &) const = default;
};

// ---------------------------------------------------------------------------
// Episode execution

/// Everything that persists across episodes of one training run: the policy,
/// the context-transition model, and the adaptation-capacity estimate.
struct Learner
{
  explicit Learner(const Config & config);

  QFunction q;
  TransitionModel transitions;
  AdaptationState adaptation;
  int episodes_seen = 0;
};

struct EpisodeOptions
{
  Condition condition = Condition::kUnseen;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  bool learn = true;
  /// Optional action script replacing the backbone (tests and scenarios).
  std::vector<Action> forced_actions;
};

struct EpisodeResult
{
  RunMetrics metrics;
  EpisodeRecord record;
};

/// Runs one episode of the per-step loop: detect, forecast, adaptation ratio,
/// constraint construction, proposal, shielding, execution, budget charge,
/// learning and model updates. Shield-disabled methods execute the proposal.
EpisodeResult run_episode(
  const Config & config, const MethodSpec & method, Learner & learner, const EpisodeOptions & options);

/// Same loop from a caller-provided initial state.
EpisodeResult run_episode_from(
  const Config & config, const MethodSpec & method, Learner & learner, const EpisodeOptions & options,
  EnvState initial);

struct ExperimentResult
{
  std::vector<AggregateRow> rows;
  std::vector<EpisodeRecord> records;
};

/// Pre-trains each (method, seed) on the seen condition, then runs
/// `runs_per_seed` evaluation episodes from copies of the trained learner.
ExperimentResult run_experiment(
  Experiment experiment, const Config & config, Condition condition, const std::vector<std::uint64_t> & seeds,
  int runs_per_seed);

/// Groups by (experiment, method, condition) in first-appearance order; each
/// group is reduced over its runs in (seed, run) order.
std::vector<AggregateRow> aggregate_records(const std::vector<EpisodeRecord> & records);

/// Exact equality of two row sets, ignoring row order.
bool same_rows(std::vector<AggregateRow> a, std::vector<AggregateRow> b);

// ---------------------------------------------------------------------------
// Persistence

std::string step_to_json_line(const StepLog & step);
std::string header_to_json_line(const RunHeader & header);
std::string run_file_name(const RunHeader & header);

/// Writes summary.csv, runs/<name>.jsonl per record and config_resolved.json.
void write_outputs(
  const std::vector<AggregateRow> & rows, const std::vector<EpisodeRecord> & records, const Config & config,
  const std::filesystem::path & out_dir);

void write_summary_csv(const std::vector<AggregateRow> & rows, const std::filesystem::path & path);
std::vector<AggregateRow> read_summary_csv(const std::filesystem::path & path);

EpisodeRecord read_run_file(const std::filesystem::path & path);
/// Reads every runs/*.jsonl below `dir` (or `dir` itself), in file-name order.
std::vector<EpisodeRecord> read_run_dir(const std::filesystem::path & dir);

// ---------------------------------------------------------------------------
// Invariant audit

struct AuditReport
{
  int runs = 0;
  int steps_checked = 0;
  int shielded_steps = 0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

/// Replays the log invariants: per-step admissibility of executed actions,
/// h as the exact max, budget bookkeeping, the local cost bound under SH and
/// the seen/held-out transition separation.
AuditReport audit_records(const std::vector<EpisodeRecord> & records, double budget_tolerance = 1e-9);

}  // namespace ctxsafe
