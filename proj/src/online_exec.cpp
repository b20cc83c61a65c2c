#include "marl/online_exec.hpp"

#include <cmath>
#include <stdexcept>

namespace marl {

InitialDist InitialDist::fixed(int sg, std::vector<int> locals) {
  InitialDist d;
  d.kind = Kind::kFixed;
  d.fixed_sg = sg;
  d.fixed_locals = std::move(locals);
  return d;
}

InitialDist InitialDist::dirichlet(double alpha) {
  InitialDist d;
  d.kind = Kind::kDirichlet;
  d.dirichlet_alpha = alpha;
  return d;
}

namespace {

void draw_initial(const ModelSpec& m, const InitialDist& init, Rng& rng, int& sg,
                  std::vector<int>& locals) {
  locals.resize(m.n_agents);
  switch (init.kind) {
    case InitialDist::Kind::kUniform:
      sg = rng.next_below(m.n_sg);
      for (int& s : locals) s = rng.next_below(m.n_sl);
      return;
    case InitialDist::Kind::kFixed:
      if (init.fixed_sg < 0 || init.fixed_sg >= m.n_sg) {
        throw std::invalid_argument("execute: fixed initial global state out of range");
      }
      if (static_cast<int>(init.fixed_locals.size()) != m.n_agents) {
        throw std::invalid_argument("execute: fixed initial locals must cover every agent");
      }
      for (int s : init.fixed_locals) {
        if (s < 0 || s >= m.n_sl) {
          throw std::invalid_argument("execute: fixed initial local state out of range");
        }
      }
      sg = init.fixed_sg;
      locals = init.fixed_locals;
      return;
    case InitialDist::Kind::kDirichlet: {
      sg = rng.next_below(m.n_sg);
      const auto w = sample_dirichlet(init.dirichlet_alpha, m.n_sl, rng);
      for (int& s : locals) s = sample_index(w, rng);
      return;
    }
  }
  throw std::logic_error("execute: unknown initial distribution kind");
}

}  // namespace

Trajectory execute(const ValidatedModel& model, const GlobalPolicy& pi_g,
                   const LocalPolicy& pi_l, int k, int horizon, const InitialDist& init,
                   Rng& rng) {
  const ModelSpec& m = model.spec();
  if (k < 1 || k > m.n_agents) {
    throw std::invalid_argument("execute: k must be in [1, n_agents]");
  }
  if (horizon < 0) throw std::invalid_argument("execute: horizon must be nonnegative");
  if (pi_g.k != k || pi_g.n_sg != m.n_sg || pi_g.n_sl != m.n_sl || pi_g.n_ag != m.n_ag) {
    throw std::invalid_argument("execute: pi_g dimensions do not match the model");
  }
  if (pi_l.n_sl != m.n_sl || pi_l.n_sg != m.n_sg || pi_l.n_al != m.n_al) {
    throw std::invalid_argument("execute: pi_l dimensions do not match the model");
  }

  Trajectory traj;
  traj.steps.reserve(horizon);
  int sg = 0;
  std::vector<int> locals;
  draw_initial(m, init, rng, sg, locals);
  std::vector<int> next_locals(m.n_agents);
  std::vector<int> tuple(k);
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    StepRecord rec;
    rec.sg = sg;
    rec.subset = sample_subset(m.n_agents, k, rng);
    for (int i = 0; i < k; ++i) tuple[i] = locals[rec.subset[i]];
    rec.key = key_of(pi_g.param, tuple, m.n_sl);
    rec.ag = pi_g.sample(sg, rec.key, rng);

    const Histogram hist = histogram_of(locals, m.n_sl);
    rec.zone_counts = hist.counts;

    double local_sum = 0.0;
    for (int i = 0; i < m.n_agents; ++i) {
      const int a = pi_l.sample(locals[i], sg, rng);
      local_sum += m.local_reward(locals[i], sg, a);
      next_locals[i] = sample_index(m.pl.row(locals[i], sg, a), rng);
    }
    rec.reward = m.global_reward(sg, rec.ag) + local_sum / m.n_agents;
    traj.discounted_return += discount * rec.reward;
    discount *= m.gamma;

    sg = sample_index(m.pg.row(sg, rec.ag), rng);
    locals.swap(next_locals);
    traj.steps.push_back(std::move(rec));
  }
  return traj;
}

double mode_tracking_rate(const Trajectory& traj) {
  if (traj.steps.empty()) return 0.0;
  int hits = 0;
  for (const auto& step : traj.steps) {
    if (step.ag < 0 || step.ag >= static_cast<int>(step.zone_counts.size())) continue;
    int best = 0;
    for (int c : step.zone_counts) best = std::max(best, c);
    if (step.zone_counts[step.ag] == best) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(traj.steps.size());
}

EvalReport evaluate(const ValidatedModel& model, const GlobalPolicy& pi_g,
                    const LocalPolicy& pi_l, int k, int horizon, const InitialDist& init,
                    int rollouts, std::uint64_t seed) {
  if (rollouts < 1) throw std::invalid_argument("evaluate: rollouts must be positive");
  double sum = 0.0;
  double sum_sq = 0.0;
  double mode_sum = 0.0;
  for (int r = 0; r < rollouts; ++r) {
    Rng sub(Rng::mix(seed, static_cast<std::uint64_t>(r)));
    const Trajectory traj = execute(model, pi_g, pi_l, k, horizon, init, sub);
    sum += traj.discounted_return;
    sum_sq += traj.discounted_return * traj.discounted_return;
    mode_sum += mode_tracking_rate(traj);
  }
  EvalReport rep;
  rep.rollouts = rollouts;
  rep.horizon = horizon;
  rep.seed = seed;
  rep.mean = sum / rollouts;
  rep.mode_rate = mode_sum / rollouts;
  if (rollouts > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / rollouts) / (rollouts - 1));
    rep.std_err = std::sqrt(var / rollouts);
  }
  return rep;
}

}  // namespace marl
