#pragma once

// Exact-expectation fixtures the unit and acceptance suites check sampled
// learners against: full successor enumeration, feasible while
// n_sg * n_sl^k * n_ag stays small.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "marl/episodic.hpp"
#include "marl/model.hpp"
#include "marl/qlearn.hpp"
#include "marl/rng.hpp"

namespace marl::testing {

// Random row-stochastic model with rewards uniform in [reward_lo, reward_hi].
inline ModelSpec random_model(int n_agents, int n_sg, int n_sl, int n_ag, int n_al,
                              double gamma, std::uint64_t seed, double reward_lo = 0.0,
                              double reward_hi = 1.0) {
  Rng rng(seed);
  ModelSpec m;
  m.n_agents = n_agents;
  m.n_sg = n_sg;
  m.n_sl = n_sl;
  m.n_ag = n_ag;
  m.n_al = n_al;
  m.gamma = gamma;
  auto fill_rows = [&](std::vector<double>& probs, int rows, int width) {
    probs.resize(static_cast<std::size_t>(rows) * width);
    for (int r = 0; r < rows; ++r) {
      double total = 0.0;
      for (int c = 0; c < width; ++c) {
        const double v = 0.05 + rng.next_double();
        probs[static_cast<std::size_t>(r) * width + c] = v;
        total += v;
      }
      for (int c = 0; c < width; ++c) probs[static_cast<std::size_t>(r) * width + c] /= total;
    }
  };
  m.pg.n_sg = n_sg;
  m.pg.n_ag = n_ag;
  fill_rows(m.pg.probs, n_sg * n_ag, n_sg);
  m.pl.n_sl = n_sl;
  m.pl.n_sg = n_sg;
  m.pl.n_al = n_al;
  fill_rows(m.pl.probs, n_sl * n_sg * n_al, n_sl);
  auto fill_rewards = [&](std::vector<double>& r, int count) {
    r.resize(count);
    for (int i = 0; i < count; ++i) r[i] = reward_lo + (reward_hi - reward_lo) * rng.next_double();
  };
  fill_rewards(m.rg, n_sg * n_ag);
  fill_rewards(m.rl, n_sl * n_sg * n_al);
  return m;
}

inline LocalPolicy random_local_policy(int n_sl, int n_sg, int n_al, std::uint64_t seed) {
  Rng rng(seed);
  LocalPolicy pi;
  pi.n_sl = n_sl;
  pi.n_sg = n_sg;
  pi.n_al = n_al;
  pi.dist.resize(static_cast<std::size_t>(n_sl) * n_sg * n_al);
  for (int sl = 0; sl < n_sl; ++sl) {
    for (int sg = 0; sg < n_sg; ++sg) {
      double total = 0.0;
      const std::size_t base = (static_cast<std::size_t>(sl) * n_sg + sg) * n_al;
      for (int a = 0; a < n_al; ++a) {
        const double v = 0.05 + rng.next_double();
        pi.dist[base + a] = v;
        total += v;
      }
      for (int a = 0; a < n_al; ++a) pi.dist[base + a] /= total;
    }
  }
  return pi;
}

inline GlobalPolicy random_global_policy(Parameterization param, int k, const ModelSpec& model,
                                         std::uint64_t seed) {
  Rng rng(seed);
  GlobalPolicy pi = GlobalPolicy::uniform(param, k, model.n_sg, model.n_sl, model.n_ag);
  for (int sg = 0; sg < pi.n_sg; ++sg) {
    for (std::int64_t key = 0; key < pi.n_keys; ++key) {
      double total = 0.0;
      const std::size_t base = (static_cast<std::size_t>(sg) * pi.n_keys + key) * pi.n_ag;
      for (int a = 0; a < pi.n_ag; ++a) {
        const double v = 0.05 + rng.next_double();
        pi.dist[base + a] = v;
        total += v;
      }
      for (int a = 0; a < pi.n_ag; ++a) pi.dist[base + a] /= total;
    }
  }
  return pi;
}

inline QTable random_qtable(Parameterization param, int k, const ModelSpec& model,
                            std::uint64_t seed, double lo, double hi) {
  QTable q = QTable::zeros(param, k, model);
  Rng rng(seed);
  for (double& v : q.values) v = lo + (hi - lo) * rng.next_double();
  return q;
}

struct SweepStats {
  QTable expected;               // exact-expectation adapted Bellman sweep
  std::vector<double> variance;  // per-cell variance of one successor max draw
};

// Enumerates every joint successor (s_g', tuple') of each cell the way the
// sampled sweep draws them (mean-field keys evolve their sorted
// representative) and integrates the next-state max exactly.
inline SweepStats exact_adapted_sweep(const QTable& q, const ModelSpec& model,
                                      const PolicyGuidedKernel& kernel,
                                      const SurrogateLocalReward& rbar) {
  SweepStats out;
  out.expected = q;
  out.variance.assign(q.values.size(), 0.0);

  std::vector<std::vector<int>> tuples(static_cast<std::size_t>(q.n_keys));
  if (q.param == Parameterization::kStandard) {
    for (std::int64_t key = 0; key < q.n_keys; ++key) {
      tuples[static_cast<std::size_t>(key)] = decode_tuple(key, q.k, q.n_sl);
    }
  } else {
    auto hists = enumerate_histograms(q.k, q.n_sl);
    for (std::int64_t key = 0; key < q.n_keys; ++key) {
      tuples[static_cast<std::size_t>(key)] =
          representative_tuple(hists[static_cast<std::size_t>(key)]);
    }
  }
  HistogramCoder coder(q.k, q.n_sl);

  std::vector<int> digits(q.k);
  std::vector<int> counts(q.n_sl);
  for (int sg = 0; sg < q.n_sg; ++sg) {
    for (std::int64_t key = 0; key < q.n_keys; ++key) {
      const auto& tuple = tuples[static_cast<std::size_t>(key)];
      double local_mean = 0.0;
      for (int s : tuple) local_mean += rbar.at(s, sg);
      local_mean /= q.k;
      for (int ag = 0; ag < q.n_ag; ++ag) {
        double mean = 0.0;
        double mean_sq = 0.0;
        std::fill(digits.begin(), digits.end(), 0);
        for (;;) {
          double p_tuple = 1.0;
          for (int i = 0; i < q.k; ++i) p_tuple *= kernel.at(tuple[i], sg, digits[i]);
          if (p_tuple > 0.0) {
            std::int64_t key2;
            if (q.param == Parameterization::kStandard) {
              key2 = encode_tuple(digits, q.n_sl);
            } else {
              counts.assign(q.n_sl, 0);
              for (int d : digits) ++counts[d];
              key2 = coder.index_of(counts);
            }
            for (int sg2 = 0; sg2 < q.n_sg; ++sg2) {
              const double w = model.pg.at(sg, ag, sg2) * p_tuple;
              if (w == 0.0) continue;
              const double v = q.max_at(sg2, key2);
              mean += w * v;
              mean_sq += w * v * v;
            }
          }
          int i = q.k - 1;
          while (i >= 0 && ++digits[i] == q.n_sl) digits[i--] = 0;
          if (i < 0) break;
        }
        const std::size_t cell = q.cell_index(sg, key, ag);
        out.expected.values[cell] =
            model.global_reward(sg, ag) + local_mean + model.gamma * mean;
        out.variance[cell] = std::max(0.0, mean_sq - mean * mean);
      }
    }
  }
  return out;
}

// Iterates the exact sweep from zero until the sup-norm step falls below tol.
inline QTable exact_fixed_point(Parameterization param, int k, const ModelSpec& model,
                                const PolicyGuidedKernel& kernel,
                                const SurrogateLocalReward& rbar, double tol = 1e-12,
                                int max_iters = 100000) {
  QTable q = QTable::zeros(param, k, model);
  for (int it = 0; it < max_iters; ++it) {
    QTable next = exact_adapted_sweep(q, model, kernel, rbar).expected;
    double gap = 0.0;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      gap = std::max(gap, std::abs(next.values[i] - q.values[i]));
    }
    q = std::move(next);
    if (gap < tol) return q;
  }
  throw std::runtime_error("exact_fixed_point: no convergence within max_iters");
}

inline double sup_gap(const QTable& a, const QTable& b) {
  if (a.values.size() != b.values.size()) {
    throw std::invalid_argument("sup_gap: table sizes differ");
  }
  double g = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    g = std::max(g, std::abs(a.values[i] - b.values[i]));
  }
  return g;
}

// Exact truncated discounted value of the k-agent surrogate game under a
// fixed dispatcher and a shared deterministic local policy, tracking agent 0's
// reward (scale / n) r_l. Full joint enumeration; the independent comparator
// for both chained constructions.
inline double macro_tagged_value(const ModelSpec& m, const GlobalPolicy& pi_g,
                                 const std::vector<int>& actions, int k, int macro_horizon,
                                 double scale) {
  std::int64_t n_tuples = 1;
  for (int i = 0; i < k; ++i) n_tuples *= m.n_sl;
  const std::int64_t n_joint = m.n_sg * n_tuples;
  auto action_of = [&](int sl, int sg) {
    return actions[static_cast<std::size_t>(sl) * m.n_sg + sg];
  };

  std::vector<double> v_next(n_joint, 0.0), v(n_joint, 0.0);
  std::vector<int> tuple(k), digits(k);
  for (int t = macro_horizon - 1; t >= 0; --t) {
    for (int sg = 0; sg < m.n_sg; ++sg) {
      for (std::int64_t code = 0; code < n_tuples; ++code) {
        std::int64_t rest = code;
        for (int i = k - 1; i >= 0; --i) {
          tuple[i] = static_cast<int>(rest % m.n_sl);
          rest /= m.n_sl;
        }
        const int a0 = action_of(tuple[0], sg);
        const double reward = scale / m.n_agents * m.local_reward(tuple[0], sg, a0);

        // Dispatcher action marginalized into the global successor law.
        const std::int64_t key = key_of(pi_g.param, tuple, m.n_sl);
        auto pi_row = pi_g.row(sg, key);
        std::vector<double> pg_mix(m.n_sg, 0.0);
        for (int ag = 0; ag < m.n_ag; ++ag) {
          for (int sg2 = 0; sg2 < m.n_sg; ++sg2) {
            pg_mix[sg2] += pi_row[ag] * m.pg.at(sg, ag, sg2);
          }
        }

        double expect = 0.0;
        std::fill(digits.begin(), digits.end(), 0);
        for (;;) {
          double p_locals = 1.0;
          std::int64_t code2 = 0;
          for (int i = 0; i < k; ++i) {
            p_locals *= m.pl.at(tuple[i], sg, action_of(tuple[i], sg), digits[i]);
            code2 = code2 * m.n_sl + digits[i];
          }
          if (p_locals > 0.0) {
            for (int sg2 = 0; sg2 < m.n_sg; ++sg2) {
              expect += pg_mix[sg2] * p_locals * v_next[sg2 * n_tuples + code2];
            }
          }
          int i = k - 1;
          while (i >= 0 && ++digits[i] == m.n_sl) digits[i--] = 0;
          if (i < 0) break;
        }
        v[sg * n_tuples + code] = reward + m.gamma * expect;
      }
    }
    std::swap(v, v_next);
  }
  double total = 0.0;
  for (std::int64_t i = 0; i < n_joint; ++i) total += v_next[i];
  return total / n_joint;  // uniform initial over (s_g, tuple)
}

// Random dense finite-horizon MDP with full-support rows and unit time
// weights, for exercising the episodic solver against exact DP.
inline EpisodicMDP random_episodic(int n_states, int n_actions, int horizon,
                                   std::uint64_t seed) {
  Rng rng(seed);
  EpisodicMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.horizon = horizon;
  mdp.rows.resize(static_cast<std::size_t>(n_states) * n_actions);
  for (auto& row : mdp.rows) {
    std::vector<double> w(n_states);
    double total = 0.0;
    for (double& x : w) {
      x = 0.05 + rng.next_double();
      total += x;
    }
    for (int s2 = 0; s2 < n_states; ++s2) row.push_back({s2, w[s2] / total});
  }
  mdp.time_factored = true;
  mdp.reward_base.resize(static_cast<std::size_t>(n_states) * n_actions);
  for (double& r : mdp.reward_base) r = rng.next_double();
  mdp.time_weight.assign(horizon, 1.0);
  mdp.initial.assign(n_states, 1.0 / n_states);
  return mdp;
}

// Deterministic dispatcher from an action table indexed (s_g, key) row-major.
inline GlobalPolicy deterministic_global(Parameterization param, int k, int n_sg, int n_sl,
                                         int n_ag, const std::vector<int>& actions) {
  GlobalPolicy g = GlobalPolicy::uniform(param, k, n_sg, n_sl, n_ag);
  if (static_cast<std::int64_t>(actions.size()) != n_sg * g.n_keys) {
    throw std::invalid_argument("deterministic_global: action table size mismatch");
  }
  for (std::int64_t cell = 0; cell < n_sg * g.n_keys; ++cell) {
    for (int a = 0; a < n_ag; ++a) {
      g.dist[static_cast<std::size_t>(cell) * n_ag + a] = actions[cell] == a ? 1.0 : 0.0;
    }
  }
  return g;
}

// Exact discounted value of a stationary policy profile in the true n-agent
// game with the dispatcher observing every agent (k = n, key in agent-id
// order), averaged over the uniform joint initial distribution. Local
// policies may differ per agent so unilateral deviations evaluate exactly.
inline double exact_joint_value(const ModelSpec& m, const GlobalPolicy& pi_g,
                                const std::vector<LocalPolicy>& locals, double tol = 1e-11) {
  const int n = m.n_agents;
  if (static_cast<int>(locals.size()) != n || pi_g.k != n) {
    throw std::invalid_argument("exact_joint_value: dispatcher must observe every agent");
  }
  std::int64_t n_tuples = 1;
  for (int i = 0; i < n; ++i) n_tuples *= m.n_sl;
  const std::int64_t n_joint = m.n_sg * n_tuples;

  std::vector<double> reward(n_joint, 0.0);
  std::vector<std::vector<std::pair<std::int64_t, double>>> rows(n_joint);
  std::vector<int> tuple(n), digits(n);
  std::vector<double> pg_mix(m.n_sg), pl_mix(static_cast<std::size_t>(n) * m.n_sl);
  for (int sg = 0; sg < m.n_sg; ++sg) {
    for (std::int64_t code = 0; code < n_tuples; ++code) {
      std::int64_t rest = code;
      for (int i = n - 1; i >= 0; --i) {
        tuple[i] = static_cast<int>(rest % m.n_sl);
        rest /= m.n_sl;
      }
      const std::int64_t idx = sg * n_tuples + code;
      const std::int64_t key = key_of(pi_g.param, tuple, m.n_sl);
      const auto pi_row = pi_g.row(sg, key);
      double r = 0.0;
      std::fill(pg_mix.begin(), pg_mix.end(), 0.0);
      for (int ag = 0; ag < m.n_ag; ++ag) {
        r += pi_row[ag] * m.global_reward(sg, ag);
        for (int sg2 = 0; sg2 < m.n_sg; ++sg2) pg_mix[sg2] += pi_row[ag] * m.pg.at(sg, ag, sg2);
      }
      std::fill(pl_mix.begin(), pl_mix.end(), 0.0);
      for (int i = 0; i < n; ++i) {
        const auto row = locals[i].row(tuple[i], sg);
        double rl = 0.0;
        for (int al = 0; al < m.n_al; ++al) {
          rl += row[al] * m.local_reward(tuple[i], sg, al);
          for (int sl2 = 0; sl2 < m.n_sl; ++sl2) {
            pl_mix[static_cast<std::size_t>(i) * m.n_sl + sl2] +=
                row[al] * m.pl.at(tuple[i], sg, al, sl2);
          }
        }
        r += rl / n;
      }
      reward[idx] = r;

      std::fill(digits.begin(), digits.end(), 0);
      for (;;) {
        double p = 1.0;
        std::int64_t code2 = 0;
        for (int i = 0; i < n; ++i) {
          p *= pl_mix[static_cast<std::size_t>(i) * m.n_sl + digits[i]];
          code2 = code2 * m.n_sl + digits[i];
        }
        if (p > 0.0) {
          for (int sg2 = 0; sg2 < m.n_sg; ++sg2) {
            if (pg_mix[sg2] > 0.0) {
              rows[idx].push_back({sg2 * n_tuples + code2, pg_mix[sg2] * p});
            }
          }
        }
        int i = n - 1;
        while (i >= 0 && ++digits[i] == m.n_sl) digits[i--] = 0;
        if (i < 0) break;
      }
    }
  }

  std::vector<double> v(n_joint, 0.0), v2(n_joint, 0.0);
  const double shrink = m.gamma / (1.0 - m.gamma);
  for (int it = 0; it < 1000000; ++it) {
    double gap = 0.0;
    for (std::int64_t idx = 0; idx < n_joint; ++idx) {
      double e = 0.0;
      for (const auto& [j, p] : rows[idx]) e += p * v[j];
      v2[idx] = reward[idx] + m.gamma * e;
      gap = std::max(gap, std::abs(v2[idx] - v[idx]));
    }
    v.swap(v2);
    if (gap * shrink < tol) {
      double total = 0.0;
      for (double x : v) total += x;
      return total / static_cast<double>(n_joint);
    }
  }
  throw std::runtime_error("exact_joint_value: no convergence");
}

}  // namespace marl::testing
