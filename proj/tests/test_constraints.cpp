#include "ctxsafe/constraints.hpp"
#include "ctxsafe/context_model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <stdexcept>

using namespace ctxsafe;

namespace
{

ContextForecast forecast_of(std::vector<Context> seq)
{
  ContextForecast f;
  f.horizon = static_cast<int>(seq.size());
  f.sequence = std::move(seq);
  f.risk = risk_level(f);
  return f;
}

PredictedMargins wide_margins()
{
  PredictedMargins m;
  m.front_gap = 500.0;
  m.ttc = 99.0;
  m.closing_speed = -5.0;
  return m;
}

// Independent oracle for the normalized deficit form.
double cb_oracle(const PredictedMargins & m, const Thresholds & t)
{
  double g = (t.min_front_gap - m.front_gap) / t.min_front_gap;
  g = std::max(g, (t.min_ttc - m.ttc) / t.min_ttc);
  g = std::max(g, m.merging ? (t.min_merge_gap - m.merge_gap) / t.min_merge_gap : -1.0);
  const double denom = t.max_closing_speed > 0.1 ? t.max_closing_speed : 0.1;
  return std::max(g, (m.closing_speed - t.max_closing_speed) / denom);
}

}  // namespace

TEST(ThresholdTable, DefaultGenerationMatchesScaledBase)
{
  const Thresholds base{8.0, 1.5, 10.0, 10.0};
  const ThresholdTable t = ThresholdTable::generate(base, 0.25);
  EXPECT_EQ(t.at(Context{0, 0, 0}), base);
  const Thresholds top = t.at(Context{2, 2, 2});
  EXPECT_DOUBLE_EQ(top.min_front_gap, 8.0 * 1.25);
  EXPECT_DOUBLE_EQ(top.min_ttc, 1.5 * 1.25);
  EXPECT_DOUBLE_EQ(top.min_merge_gap, 10.0 * 1.25);
  EXPECT_DOUBLE_EQ(top.max_closing_speed, 10.0 / 1.25);
  const Thresholds mid = t.at(Context{1, 1, 1});
  EXPECT_DOUBLE_EQ(mid.min_front_gap, 8.0 * 1.125);
  EXPECT_TRUE(t.is_monotone());
  EXPECT_THROW(ThresholdTable::generate(base, -0.1), std::invalid_argument);
}

TEST(ThresholdTable, MonotonicityCheckDetectsABrokenEntry)
{
  ThresholdTable t = ThresholdTable::generate(Thresholds{}, 0.5);
  Thresholds loose = t.at(Context{1, 0, 0});
  loose.min_ttc = 0.1;
  t.set(Context{2, 0, 0}, loose);
  EXPECT_FALSE(t.is_monotone());
}

TEST(RiskLevel, Examples)
{
  EXPECT_DOUBLE_EQ(risk_level(forecast_of({Context{0, 0, 0}, Context{0, 0, 0}})), 0.0);
  EXPECT_DOUBLE_EQ(risk_level(forecast_of({Context{2, 2, 2}})), 1.0);
  EXPECT_DOUBLE_EQ(risk_level(forecast_of({Context{2, 1, 0}, Context{0, 1, 0}})), 1.0 / 3.0);
  EXPECT_THROW(risk_level(ContextForecast{}), std::invalid_argument);
}

TEST(EffectiveThresholds, IdempotentOnPersistentForecast)
{
  const ThresholdTable t = ThresholdTable::generate(Thresholds{}, 0.25);
  const Context c{1, 0, 2};
  EXPECT_EQ(effective_thresholds(t, c, forecast_of({c, c, c})), t.at(c));
}

TEST(EffectiveThresholds, ElementWiseExtremum)
{
  ThresholdTable t;
  const Context low{0, 0, 0};
  const Context high{2, 2, 2};
  t.set(low, Thresholds{10.0, 2.0, 12.0, 8.0});
  t.set(high, Thresholds{15.0, 3.0, 18.0, 5.0});
  EXPECT_EQ(effective_thresholds(t, low, forecast_of({low, high})), (Thresholds{15.0, 3.0, 18.0, 5.0}));
}

TEST(EffectiveThresholds, DominatesEveryContributor)
{
  const ThresholdTable t = ThresholdTable::generate(Thresholds{}, 0.4);
  Rng rng(9);
  std::uniform_int_distribution<int> pick(0, kNumContexts - 1);
  std::uniform_int_distribution<int> len(1, 6);
  for (int i = 0; i < 500; ++i) {
    const Context cur = Context::from_index(pick(rng));
    std::vector<Context> seq;
    for (int k = len(rng); k > 0; --k) seq.push_back(Context::from_index(pick(rng)));
    const Thresholds eff = effective_thresholds(t, cur, forecast_of(seq));
    EXPECT_TRUE(dominates(eff, t.at(cur)));
    for (const Context & c : seq) EXPECT_TRUE(dominates(eff, t.at(c)));
  }
}

TEST(CbConstraint, Examples)
{
  const Thresholds t{10.0, 2.0, 12.0, 8.0};
  PredictedMargins at;
  at.front_gap = 10.0;
  at.ttc = 2.0;
  at.merge_gap = 12.0;
  at.closing_speed = 8.0;
  at.merging = true;
  EXPECT_DOUBLE_EQ(cb_constraint(at, t), 0.0);

  PredictedMargins close = wide_margins();
  close.front_gap = 8.0;
  EXPECT_DOUBLE_EQ(cb_constraint(close, t), 0.2);

  PredictedMargins safe;
  safe.front_gap = 20.0;
  safe.ttc = 4.0;
  safe.merge_gap = 24.0;
  safe.closing_speed = 4.0;
  safe.merging = true;
  const double g = cb_constraint(safe, t);
  EXPECT_LT(g, 0.0);
  EXPECT_DOUBLE_EQ(g, cb_oracle(safe, t));
}

TEST(CbConstraint, MergeTermOnlyWhileMerging)
{
  const Thresholds t{10.0, 2.0, 12.0, 8.0};
  PredictedMargins m = wide_margins();
  m.merge_gap = 0.0;
  m.merging = false;
  EXPECT_LT(cb_constraint(m, t), 0.0);
  m.merging = true;
  EXPECT_DOUBLE_EQ(cb_constraint(m, t), 1.0);
}

TEST(CbConstraint, MatchesOracleOnRandomInputs)
{
  Rng rng(4);
  std::uniform_real_distribution<double> gap(0.0, 80.0);
  std::uniform_real_distribution<double> ttc(0.01, 99.0);
  std::uniform_real_distribution<double> close(-10.0, 15.0);
  std::uniform_real_distribution<double> thr(0.05, 20.0);
  for (int i = 0; i < 2000; ++i) {
    PredictedMargins m;
    m.front_gap = gap(rng);
    m.ttc = ttc(rng);
    m.merge_gap = gap(rng);
    m.closing_speed = close(rng);
    m.merging = i % 2 == 0;
    const Thresholds t{thr(rng), thr(rng) / 5.0, thr(rng), thr(rng) / 2.0};
    EXPECT_DOUBLE_EQ(cb_constraint(m, t), cb_oracle(m, t));
    EXPECT_EQ(cb_constraint(m, t) <= 0.0, m.front_gap >= t.min_front_gap && m.ttc >= t.min_ttc &&
                                            (!m.merging || m.merge_gap >= t.min_merge_gap) &&
                                            m.closing_speed <= t.max_closing_speed);
  }
}

TEST(AsConstraint, InactiveUnlessRhoExceedsOne)
{
  EXPECT_EQ(as_constraint(5.0, 0.8), -1.0);
  EXPECT_EQ(as_constraint(5.0, 1.0), -1.0);
  EXPECT_EQ(as_constraint(5.0, 1.0 + 1e-12), 5.0);
}

TEST(AsConstraint, HandInflatedThreshold)
{
  const Thresholds base{10.0, 1.0, 10.0, 10.0};
  const Thresholds tight = tighten_thresholds(base, 2.0, 0.5, 4.0);
  EXPECT_DOUBLE_EQ(tight.min_front_gap, 15.0);
  EXPECT_DOUBLE_EQ(tight.max_closing_speed, 10.0 / 1.5);
  PredictedMargins m = wide_margins();
  m.front_gap = 12.0;
  EXPECT_DOUBLE_EQ(as_constraint(cb_constraint(m, tight), 2.0), 0.2);
}

TEST(AsConstraint, TighteningIsClipped)
{
  const Thresholds base{10.0, 1.0, 10.0, 10.0};
  EXPECT_EQ(tighten_thresholds(base, 50.0, 0.5, 4.0), tighten_thresholds(base, 5.0, 0.5, 4.0));
  EXPECT_EQ(tighten_thresholds(base, 0.3, 0.5, 4.0), base);
}

TEST(AllocateThreshold, Anchors)
{
  EXPECT_NEAR(allocate_threshold(SafetyBudget::with_total(10.0), 10, 0.0, 0.0, 0.0, 0.0, 1e-12), 1.0, 1e-12);
  EXPECT_NEAR(allocate_threshold(SafetyBudget::with_total(10.0), 10, 1.0, 0.5, 1.0, 1.0, 1e-12), 0.5, 1e-12);
  EXPECT_NEAR(allocate_threshold(SafetyBudget::with_total(8.0), 4, 0.5, 2.0, 1.0, 1.0, 1e-12), 0.8, 1e-12);
}

TEST(AllocateThreshold, FloorsAtZeroAndRejectsZeroExposure)
{
  SafetyBudget spent{2.0, 3.0};
  EXPECT_EQ(allocate_threshold(spent, 5, 0.2, 0.0, 1.0, 1.0, 1e-6), 0.0);
  EXPECT_EQ(allocate_threshold(SafetyBudget::with_total(0.0), 5, 0.2, 0.0, 1.0, 1.0, 1e-6), 0.0);
  EXPECT_THROW(allocate_threshold(SafetyBudget::with_total(1.0), 0, 0.0, 0.0, 1.0, 1.0, 1e-6), std::invalid_argument);
}

TEST(ShConstraint, Examples)
{
  EXPECT_DOUBLE_EQ(sh_constraint(0.3, 0.5), -0.2);
  EXPECT_EQ(sh_constraint(0.37, 0.37), 0.0);
  EXPECT_DOUBLE_EQ(sh_constraint(0.2, 0.0), 0.2);
}

TEST(Combine, HIsTheMaxAndSignDecidesAdmissibility)
{
  const ConstraintEval a = combine(-1.0, 0.2, -0.5, 0.1);
  EXPECT_EQ(a.h, 0.2);
  EXPECT_FALSE(a.admissible);
  const ConstraintEval b = combine(-0.3, -1.0, -0.1, 0.1);
  EXPECT_EQ(b.h, -0.1);
  EXPECT_TRUE(b.admissible);
  EXPECT_TRUE(combine(0.0, -1.0, -1.0, 0.0).admissible);
}

TEST(ConstraintSetName, Labels)
{
  EXPECT_EQ(constraint_set_name(kAllConstraints), "CB+AS+SH");
  EXPECT_EQ(constraint_set_name(kCB | kSH), "CB+SH");
  EXPECT_EQ(constraint_set_name(kAS), "AS");
  EXPECT_EQ(constraint_set_name(0), "none");
}

TEST(ConstraintBuilder, InactiveMechanismsReportMinusOne)
{
  const ContextForecast f = forecast_of({Context{2, 2, 2}});
  ConstraintInputs in;
  in.current = Context{2, 2, 2};
  in.forecast = &f;
  in.budget = SafetyBudget::with_total(5.0);
  in.remaining_steps = 10;
  in.rho = 3.0;
  PredictedMargins m = wide_margins();
  m.front_gap = 1.0;
  m.expected_cost = 2.0;

  const ConstraintBuilder only_sh(ThresholdTable::generate(Thresholds{}), ConstraintParams{}, kSH);
  const ConstraintEval e = only_sh.prepare(in).evaluate(m);
  EXPECT_EQ(e.g_cb, -1.0);
  EXPECT_EQ(e.g_as, -1.0);
  EXPECT_GT(e.g_sh, 0.0);
  EXPECT_EQ(e.expected_cost, 2.0);

  const ConstraintBuilder all(ThresholdTable::generate(Thresholds{}), ConstraintParams{});
  const ConstraintEval full = all.prepare(in).evaluate(m);
  EXPECT_GT(full.g_cb, 0.0);
  EXPECT_GE(full.g_as, full.g_cb);
  EXPECT_EQ(full.h, std::max({full.g_cb, full.g_as, full.g_sh}));
}

TEST(ConstraintBuilder, PrepareMatchesHandComputation)
{
  const ThresholdTable table = ThresholdTable::generate(Thresholds{}, 0.25);
  const ContextForecast f = forecast_of({Context{1, 1, 1}, Context{2, 1, 1}});
  ConstraintInputs in;
  in.current = Context{1, 1, 1};
  in.forecast = &f;
  in.budget = SafetyBudget{5.0, 1.0};
  in.remaining_steps = 20;
  in.rho = 1.5;
  ConstraintParams p;
  const StepConstraints s = ConstraintBuilder(table, p).prepare(in);
  EXPECT_EQ(s.cb, table.at(Context{2, 1, 1}));
  const double risk = (3.0 / 6.0 + 4.0 / 6.0) / 2.0;
  EXPECT_DOUBLE_EQ(s.risk, risk);
  EXPECT_DOUBLE_EQ(s.tau, 4.0 / (20.0 + p.epsilon) / (1.0 + risk + 0.5));
  EXPECT_DOUBLE_EQ(s.as_tight.min_front_gap, s.cb.min_front_gap * 1.25);

  in.forecast = nullptr;
  EXPECT_THROW(ConstraintBuilder(table, p).prepare(in), std::invalid_argument);
}

TEST(ConstraintBuilder, FixedIgnoresForecastAndRho)
{
  const ThresholdTable table = ThresholdTable::generate(Thresholds{}, 0.25);
  const ConstraintBuilder fixed = ConstraintBuilder::fixed(table, Context{1, 1, 1}, 5.0 / 120.0);
  EXPECT_TRUE(fixed.is_fixed());
  EXPECT_EQ(fixed.active(), kCB | kSH);
  const ContextForecast hot = forecast_of({Context{2, 2, 2}});
  ConstraintInputs in;
  in.current = Context{2, 2, 2};
  in.forecast = &hot;
  in.budget = SafetyBudget{5.0, 4.9};
  in.remaining_steps = 3;
  in.rho = 9.0;
  const StepConstraints a = fixed.prepare(in);
  in.forecast = nullptr;
  in.rho = 0.0;
  const StepConstraints b = fixed.prepare(in);
  EXPECT_EQ(a.cb, table.at(Context{1, 1, 1}));
  EXPECT_EQ(a.cb, b.cb);
  EXPECT_EQ(a.tau, 5.0 / 120.0);
  EXPECT_EQ(a.tau, b.tau);
  EXPECT_EQ(a.rho, 0.0);
}

TEST(Evaluate, LookaheadFailureIsInadmissible)
{
  StepConstraints s;
  s.tau = 0.3;
  const ConstraintEval e = evaluate(s, []() -> PredictedMargins { throw std::runtime_error("boom"); });
  EXPECT_TRUE(e.error);
  EXPECT_FALSE(e.admissible);
  EXPECT_EQ(e.h, std::max({e.g_cb, e.g_as, e.g_sh}));
  const ConstraintEval ok = evaluate(s, [] { return wide_margins(); });
  EXPECT_FALSE(ok.error);
  EXPECT_TRUE(ok.admissible);
}
