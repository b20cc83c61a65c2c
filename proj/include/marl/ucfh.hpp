#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "marl/episodic.hpp"
#include "marl/rng.hpp"

namespace marl {

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 1.0;
};

// Confidence set for one successor probability given n committed samples:
// the min(Hoeffding, Bernstein) range bound intersected with the empirical-sd
// constraint |sqrt(p(1-p)) - sqrt(phat(1-phat))| <= sqrt(2 ln(6/delta1)/(n-1)),
// returned as the hull of the feasible set. n = 0 yields [0, 1].
ConfidenceInterval confidence_set(double phat, std::int64_t n, double delta1);

struct UcfhConfig {
  double epsilon = 0.1;
  double delta = 0.1;
  std::int64_t max_episodes = 1000;
  // Commit budget; unset means unbounded. Intended for on-demand state spaces
  // where the full sample-complexity schedule is out of reach.
  std::optional<std::int64_t> max_updates;
  // Replaces the sample-size formula value; the formula value is still logged.
  std::optional<std::int64_t> m_override;
  bool record_trace = false;
};

struct UcfhDerived {
  double w_min = 0.0;      // smallest visitation weight worth learning
  double delta1 = 0.0;     // per-update failure budget
  double m_formula = 0.0;  // raw sample-size formula value before clamp/override
  std::int64_t m = 1;      // samples target actually used
  double known_cap = 0.0;  // |S| m H; pairs at this count stop qualifying
};

UcfhDerived ucfh_derived_constants(std::int64_t state_bound, int n_actions, int horizon,
                                   const UcfhConfig& cfg);

// Greedy upper bound of sum p(i) value(i) over probability vectors with
// p(i) in [lo(i), hi(i)]: every slot starts at its lower bound and the
// remaining mass goes to high-value slots first (lower index on value ties).
// Throws std::logic_error when the box cannot hold total mass 1. When out is
// given it receives the maximizing vector.
double optimistic_allocation(std::span<const double> values, std::span<const double> lo,
                             std::span<const double> hi, std::vector<double>* out = nullptr);

enum class UcfhTermination { kMaxEpisodes, kMaxUpdates, kSaturated };

struct UcfhTraceRow {
  std::int64_t episode = 0;  // episodes completed when the commit happened
  int s = 0;
  int a = 0;
  std::int64_t n_before = 0;
  std::int64_t n_after = 0;
  double optimistic_value = 0.0;  // replanned value at the last episode's start state
};

struct UcfhResult {
  std::vector<std::vector<int>> policy;  // (t, s); states never planned act 0
  std::vector<std::vector<double>> v;    // (t, s) optimistic values, v[horizon] = 0
  std::vector<double> state_weights;     // per state: sum over actions of all visits
  std::int64_t episodes = 0;
  std::int64_t updates = 0;
  UcfhTermination termination = UcfhTermination::kMaxEpisodes;
  UcfhDerived derived;
  std::vector<UcfhTraceRow> trace;
};

// Episodic confidence-set solver. Samples episodes under the current
// optimistic plan; a visited (state, action) pair commits its pending visits
// once they dominate max(m * w_min, committed count), and every commit is
// followed by one optimistic replan. Fully enumerated environments plan over
// all states with confidence sets on the known support; on-demand
// environments plan over visited states only, with unseen successor mass
// routed to an optimistic completion bucket and unvisited states valued at
// the remaining-reward upper bound.
UcfhResult ucfh_solve(EpisodicEnv& env, const UcfhConfig& cfg, Rng& rng);

}  // namespace marl
