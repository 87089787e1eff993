#include "ctxsafe/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ctxsafe
{

namespace
{

int bin(double value, std::initializer_list<double> edges)
{
  int b = 0;
  for (double e : edges) {
    if (value >= e) ++b;
  }
  return b;
}

}  // namespace

int DiscreteObsKey::flat() const
{
  return (((gap_bin * kTtcBins + ttc_bin) * 2 + (merge_zone ? 1 : 0)) * kSpeedBins + speed_bin) *
           kNumContexts +
         context;
}

DiscreteObsKey DiscreteObsKey::from_flat(int flat)
{
  if (flat < 0 || flat >= kNumObsKeys) throw std::out_of_range("observation key out of range");
  DiscreteObsKey k;
  k.context = flat % kNumContexts;
  flat /= kNumContexts;
  k.speed_bin = flat % kSpeedBins;
  flat /= kSpeedBins;
  k.merge_zone = (flat % 2) == 1;
  flat /= 2;
  k.ttc_bin = flat % kTtcBins;
  k.gap_bin = flat / kTtcBins;
  return k;
}

DiscreteObsKey discretize(const Observation & obs, const Context & detected)
{
  DiscreteObsKey k;
  k.gap_bin = bin(obs.own().front_gap, {5.0, 10.0, 20.0, 40.0});
  k.ttc_bin = bin(obs.ttc, {1.0, 2.0, 4.0});
  k.merge_zone = obs.in_merge_zone;
  k.speed_bin = bin(obs.ego_speed, {10.0, 20.0, 30.0});
  k.context = detected.index();
  return k;
}

double EpsilonSchedule::at(int episode) const
{
  if (decay_episodes <= 0 || episode >= decay_episodes) return end;
  const double f = static_cast<double>(std::max(episode, 0)) / decay_episodes;
  return start + f * (end - start);
}

double safety_loss(const ConstraintEval & eval)
{
  return std::max(0.0, eval.g_cb) + std::max(0.0, eval.g_as) + std::max(0.0, eval.g_sh);
}

QFunction::QFunction(double learning_rate, double discount, double initial_value)
: learning_rate_(learning_rate), discount_(discount), table_(kNumObsKeys)
{
  if (!(learning_rate_ > 0.0 && learning_rate_ <= 1.0)) {
    throw std::invalid_argument("learning rate must lie in (0, 1]");
  }
  if (!(discount_ >= 0.0 && discount_ <= 1.0)) throw std::invalid_argument("discount must lie in [0, 1]");
  if (!std::isfinite(initial_value)) throw std::invalid_argument("initial Q value must be finite");
  for (auto & r : table_) r.fill(initial_value);
}

double QFunction::value(const DiscreteObsKey & key, Action a) const
{
  return table_[static_cast<std::size_t>(key.flat())][static_cast<std::size_t>(to_index(a))];
}

void QFunction::set_value(const DiscreteObsKey & key, Action a, double v)
{
  if (!std::isfinite(v)) throw std::invalid_argument("Q values must be finite");
  table_[static_cast<std::size_t>(key.flat())][static_cast<std::size_t>(to_index(a))] = v;
}

const std::array<double, kNumActions> & QFunction::row(const DiscreteObsKey & key) const
{
  return table_[static_cast<std::size_t>(key.flat())];
}

Action QFunction::greedy(const DiscreteObsKey & key) const
{
  const auto & r = row(key);
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (r[static_cast<std::size_t>(a)] > r[static_cast<std::size_t>(best)]) best = a;
  }
  return static_cast<Action>(best);
}

Action QFunction::select_action(const DiscreteObsKey & key, double epsilon, Rng & rng) const
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    return static_cast<Action>(pick(rng));
  }
  return greedy(key);
}

void QFunction::update(const Transition & t, double lambda)
{
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  const double shaped = t.reward - lambda * safety_loss(t.eval);
  double target = shaped;
  if (!t.terminal) {
    const auto & next = row(t.next_key);
    target += discount_ * *std::max_element(next.begin(), next.end());
  }
  double & q = table_[static_cast<std::size_t>(t.key.flat())][static_cast<std::size_t>(to_index(t.action))];
  q += learning_rate_ * (target - q);
}

void QFunction::save(std::ostream & out) const
{
  std::ostringstream header;
  header.precision(17);
  header << "# qfunction lr=" << learning_rate_ << " gamma=" << discount_ << "\n";
  out << header.str();
  out.precision(17);
  for (int k = 0; k < kNumObsKeys; ++k) {
    for (int a = 0; a < kNumActions; ++a) {
      const double v = table_[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)];
      out << k << ' ' << action_name(static_cast<Action>(a)) << ' ' << v << '\n';
    }
  }
}

QFunction QFunction::load(std::istream & in)
{
  std::string line;
  if (!std::getline(in, line) || line.rfind("# qfunction", 0) != 0) {
    throw std::runtime_error("not a Q-function file");
  }
  double lr = 0.0;
  double gamma = 0.0;
  if (std::sscanf(line.c_str(), "# qfunction lr=%lf gamma=%lf", &lr, &gamma) != 2) {
    throw std::runtime_error("malformed Q-function header: " + line);
  }
  QFunction q(lr, gamma);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int key = 0;
    std::string action;
    double value = 0.0;
    if (!(ls >> key >> action >> value)) {
      throw std::runtime_error("malformed Q-function line " + std::to_string(lineno));
    }
    const auto a = parse_action(action);
    if (!a) throw std::runtime_error("unknown action '" + action + "' on line " + std::to_string(lineno));
    q.set_value(DiscreteObsKey::from_flat(key), *a, value);
  }
  return q;
}

Action heuristic_policy(const Observation & obs, const HeuristicParams & p)
{
  if (obs.ttc < p.brake_ttc) return Action::kSlower;
  if (obs.on_ramp && obs.in_merge_zone && obs.merge_gap > p.merge_gap) return Action::kLaneLeft;
  if (obs.own().front_gap > p.open_gap && obs.ego_speed < p.cruise_speed) return Action::kFaster;
  return Action::kIdle;
}

}  // namespace ctxsafe
