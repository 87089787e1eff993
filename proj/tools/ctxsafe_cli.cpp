#include "ctxsafe/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace
{

using namespace ctxsafe;

int cmd_run(
  const std::string & experiment, const std::string & condition, int seeds, int runs_per_seed,
  const std::string & config_path, const std::string & out_dir)
{
  const auto exp = parse_experiment(experiment);
  if (!exp) throw ConfigError("unknown experiment '" + experiment + "'");
  const auto cond = parse_condition(condition);
  if (!cond) throw ConfigError("unknown condition '" + condition + "'");
  const Config config = config_path.empty() ? Config{} : load_config(config_path);
  config.validate();

  std::vector<std::uint64_t> seed_list;
  for (int i = 0; i < seeds; ++i) seed_list.push_back(config.harness.base_seed + static_cast<std::uint64_t>(i));

  const ExperimentResult result = run_experiment(*exp, config, *cond, seed_list, runs_per_seed);
  write_outputs(result.rows, result.records, config, out_dir);

  const AuditReport audit = audit_records(result.records);
  for (const AggregateRow & r : result.rows) {
    if (r.metric != "violation_count" && r.metric != "total_reward") continue;
    std::printf(
      "%-22s %-10s %-16s %10.3f +- %-8.3f (n=%d)\n", r.method.c_str(), r.condition.c_str(), r.metric.c_str(),
      r.mean, r.std, r.n);
  }
  for (const std::string & f : audit.failures) std::cerr << "audit: " << f << '\n';
  std::printf("wrote %zu runs to %s\n", result.records.size(), out_dir.c_str());
  return audit.ok() ? 0 : 2;
}

int cmd_audit(const std::string & logs)
{
  const auto records = read_run_dir(logs);
  const AuditReport report = audit_records(records);
  for (const std::string & f : report.failures) std::cerr << f << '\n';
  std::printf(
    "audited %d runs, %d steps (%d shielded): %zu failures\n", report.runs, report.steps_checked,
    report.shielded_steps, report.failures.size());
  if (report.runs == 0) {
    std::cerr << "no run files under " << logs << '\n';
    return 2;
  }
  return report.ok() ? 0 : 1;
}

int cmd_report(const std::string & logs)
{
  const auto records = read_run_dir(logs);
  const auto rows = aggregate_records(records);
  const std::filesystem::path out = std::filesystem::path(logs) / "summary_recomputed.csv";
  write_summary_csv(rows, out);
  std::printf("experiment,method,condition,metric,mean,std,n\n");
  for (const AggregateRow & r : rows) {
    std::printf(
      "%s,%s,%s,%s,%.17g,%.17g,%d\n", r.experiment.c_str(), r.method.c_str(), r.condition.c_str(),
      r.metric.c_str(), r.mean, r.std, r.n);
  }

  const std::filesystem::path existing = std::filesystem::path(logs) / "summary.csv";
  if (std::filesystem::exists(existing)) {
    if (!same_rows(read_summary_csv(existing), rows)) {
      std::cerr << existing.string() << " does not match the run files\n";
      return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"context-adaptive safety shield experiments on a highway merge"};
  app.require_subcommand(1);

  std::string experiment = "c8";
  std::string condition = "unseen";
  int seeds = 10;
  int runs_per_seed = 3;
  std::string config_path;
  std::string out_dir = "out";
  auto * run = app.add_subcommand("run", "run an experiment and write summary.csv plus per-run logs");
  run->add_option("--experiment", experiment, "c8 | c7 | c5")->check(CLI::IsMember({"c8", "c7", "c5"}));
  run->add_option("--condition", condition, "stationary | seen | unseen")
    ->check(CLI::IsMember({"stationary", "seen", "unseen"}));
  run->add_option("--seeds", seeds, "number of seeds")->check(CLI::Range(2, 100000));
  run->add_option("--runs-per-seed", runs_per_seed, "evaluation runs per seed")->check(CLI::PositiveNumber);
  run->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory");

  std::string logs;
  auto * audit = app.add_subcommand("audit", "replay the invariant checks over run logs");
  audit->add_option("--logs", logs, "output directory of a run")->required()->check(CLI::ExistingDirectory);
  auto * report = app.add_subcommand("report", "re-aggregate summary rows from run logs");
  report->add_option("--logs", logs, "output directory of a run")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(experiment, condition, seeds, runs_per_seed, config_path, out_dir);
    if (*audit) return cmd_audit(logs);
    if (*report) return cmd_report(logs);
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
