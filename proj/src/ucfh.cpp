#include "marl/ucfh.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace marl {

ConfidenceInterval confidence_set(double phat, std::int64_t n, double delta1) {
  if (!(delta1 > 0.0 && delta1 < 1.0)) {
    throw std::invalid_argument("confidence_set: delta1 must be in (0, 1)");
  }
  if (!(phat >= 0.0 && phat <= 1.0)) {
    throw std::invalid_argument("confidence_set: phat must be in [0, 1]");
  }
  if (n < 0) throw std::invalid_argument("confidence_set: n must be nonnegative");
  if (n == 0) return {0.0, 1.0};

  const double log6 = std::log(6.0 / delta1);
  double c = std::sqrt(log6 / (2.0 * static_cast<double>(n)));  // Hoeffding
  if (n > 1) {
    const double var = phat * (1.0 - phat);
    const double bern =
        std::sqrt(2.0 * var * log6 / static_cast<double>(n)) + 7.0 * log6 / (3.0 * (n - 1));
    c = std::min(c, bern);
  }
  double lo = std::max(0.0, phat - c);
  double hi = std::min(1.0, phat + c);
  if (n <= 1) return {lo, hi};

  // Empirical-sd constraint on g(p) = sqrt(p(1-p)). The feasible set is a
  // union of at most two closed intervals; its hull endpoints are among the
  // range endpoints and the roots of p(1-p) = bound^2.
  const double d = std::sqrt(2.0 * log6 / static_cast<double>(n - 1));
  const double g = std::sqrt(phat * (1.0 - phat));
  const double upper = g + d;
  const double lower = g - d;
  const double slack = 1e-12;
  auto feasible = [&](double p) {
    if (p < lo - slack || p > hi + slack) return false;
    if (p < 0.0 || p > 1.0) return false;
    double gp = std::sqrt(std::max(0.0, p * (1.0 - p)));
    return gp <= upper + slack && gp >= lower - slack;
  };
  std::vector<double> cand = {lo, hi, phat};
  auto add_roots = [&cand](double b) {
    if (b < 0.0) return;
    double disc = 1.0 - 4.0 * b * b;
    if (disc < 0.0) return;
    double r = std::sqrt(disc);
    cand.push_back((1.0 - r) / 2.0);
    cand.push_back((1.0 + r) / 2.0);
  };
  add_roots(upper);
  add_roots(lower);
  double best_lo = phat;
  double best_hi = phat;
  for (double p : cand) {
    if (!feasible(p)) continue;
    best_lo = std::min(best_lo, p);
    best_hi = std::max(best_hi, p);
  }
  return {std::clamp(best_lo, 0.0, 1.0), std::clamp(best_hi, 0.0, 1.0)};
}

UcfhDerived ucfh_derived_constants(std::int64_t state_bound, int n_actions, int horizon,
                                   const UcfhConfig& cfg) {
  if (state_bound < 1 || n_actions < 1 || horizon < 1) {
    throw std::invalid_argument("ucfh_derived_constants: dimensions must be positive");
  }
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("ucfh: epsilon must be positive");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) {
    throw std::invalid_argument("ucfh: delta must be in (0, 1)");
  }
  if (cfg.max_episodes < 1) throw std::invalid_argument("ucfh: max_episodes must be positive");

  UcfhDerived out;
  const double s = static_cast<double>(state_bound);
  const double a = n_actions;
  const double h = horizon;
  out.w_min = cfg.epsilon / (4.0 * h * s);
  const double u_max = s * a * std::log2(s * h / out.w_min);
  out.delta1 = cfg.delta / (20.0 * u_max);

  const double loglog = std::log2(std::log2(h));  // finite for horizon >= 2
  const double lead = 512.0 * loglog * loglog;
  const double accuracy = 10.0 * h * h / (cfg.epsilon * cfg.epsilon);
  const double span = std::log2(8.0 * h * h * s * s / cfg.epsilon);
  const double inner = std::log2(4.0 * s * s * h * h / cfg.epsilon);
  const double tail = std::log(60.0 * s * a * inner * inner / cfg.delta);
  out.m_formula = lead * accuracy * span * span * tail;

  double m_eff = out.m_formula;
  if (!(m_eff >= 1.0)) m_eff = 1.0;  // degenerate-horizon and NaN guard
  if (m_eff > 4.0e18) m_eff = 4.0e18;
  out.m = cfg.m_override.value_or(static_cast<std::int64_t>(std::ceil(m_eff)));
  if (out.m < 1) throw std::invalid_argument("ucfh: m override must be positive");
  out.known_cap = s * static_cast<double>(out.m) * h;
  return out;
}

double optimistic_allocation(std::span<const double> values, std::span<const double> lo,
                             std::span<const double> hi, std::vector<double>* out) {
  const std::size_t n = values.size();
  if (lo.size() != n || hi.size() != n) {
    throw std::invalid_argument("optimistic_allocation: size mismatch");
  }
  if (n == 0) throw std::invalid_argument("optimistic_allocation: empty support");
  double mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lo[i] >= -1e-12) || hi[i] < lo[i] - 1e-12) {
      throw std::invalid_argument("optimistic_allocation: malformed interval");
    }
    mass += lo[i];
  }
  double deficit = 1.0 - mass;
  if (deficit < -1e-9) {
    throw std::logic_error("optimistic_allocation: lower bounds exceed total mass 1");
  }
  deficit = std::max(deficit, 0.0);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&values](int x, int y) {
    if (values[x] != values[y]) return values[x] > values[y];
    return x < y;
  });
  std::vector<double> p(lo.begin(), lo.end());
  for (int i : order) {
    if (deficit <= 0.0) break;
    double add = std::min(deficit, hi[i] - p[i]);
    if (add > 0.0) {
      p[i] += add;
      deficit -= add;
    }
  }
  if (deficit > 1e-9) {
    throw std::logic_error("optimistic_allocation: upper bounds sum below 1");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += p[i] * values[i];
  if (out) *out = std::move(p);
  return total;
}

namespace {

using SlotDict = std::vector<std::pair<int, std::int64_t>>;  // (successor, count), sorted

void slot_add(SlotDict& dict, int id, std::int64_t count) {
  auto it = std::lower_bound(dict.begin(), dict.end(), id,
                             [](const auto& e, int v) { return e.first < v; });
  if (it != dict.end() && it->first == id) {
    it->second += count;
  } else {
    dict.insert(it, {id, count});
  }
}

std::int64_t slot_get(const SlotDict& dict, int id) {
  auto it = std::lower_bound(dict.begin(), dict.end(), id,
                             [](const auto& e, int v) { return e.first < v; });
  return (it != dict.end() && it->first == id) ? it->second : 0;
}

struct Cell {
  std::int64_t n = 0;  // committed visits
  std::int64_t v = 0;  // pending visits since the last commit
  SlotDict slot_n;
  SlotDict slot_v;
  // Confidence intervals per successor, rebuilt from committed counts on
  // commit: (successor, lo, hi).
  std::vector<std::tuple<int, double, double>> cis;
  double bucket_hi = 1.0;  // unseen-successor mass cap (on-demand mode)
  char in_queue = 0;
};

class Solver {
 public:
  Solver(EpisodicEnv& env, const UcfhConfig& cfg)
      : env_(env),
        cfg_(cfg),
        derived_(
            ucfh_derived_constants(env.state_space_bound(), env.n_actions(), env.horizon(), cfg)),
        dense_(env.fully_enumerated()),
        n_actions_(env.n_actions()),
        horizon_(env.horizon()) {
    v_up_.assign(horizon_ + 1, 0.0);
    for (int t = horizon_ - 1; t >= 0; --t) v_up_[t] = v_up_[t + 1] + env_.max_reward_at(t);
    v_.assign(horizon_ + 1, {});
    policy_.assign(horizon_, {});
  }

  UcfhResult solve(Rng& rng) {
    replan();
    UcfhTermination term = UcfhTermination::kMaxEpisodes;
    bool stop = false;
    while (episodes_ < cfg_.max_episodes && !stop) {
      run_episode(rng);
      ++episodes_;
      bool learnable = false;
      for (const auto& [s, a] : episode_pairs_) {
        Cell& c = cell(s, a);
        if (static_cast<double>(c.n) < derived_.known_cap) learnable = true;
        if (!c.in_queue && qualifies(c)) {
          c.in_queue = 1;
          queue_.push_back({s, a});
        }
      }
      while (!queue_.empty() && !stop) {
        auto [s, a] = queue_.front();
        queue_.pop_front();
        Cell& c = cell(s, a);
        c.in_queue = 0;
        if (!qualifies(c)) continue;
        commit(s, a);
        if (cfg_.max_updates && updates_ >= *cfg_.max_updates) {
          term = UcfhTermination::kMaxUpdates;
          stop = true;
        }
      }
      if (!stop && !learnable) {
        term = UcfhTermination::kSaturated;
        stop = true;
      }
    }

    UcfhResult out;
    const int s_final = env_.state_count();
    out.policy.assign(horizon_, std::vector<int>());
    for (int t = 0; t < horizon_; ++t) {
      out.policy[t] = policy_[t];
      out.policy[t].resize(s_final, 0);
    }
    out.v.assign(horizon_ + 1, std::vector<double>());
    for (int t = 0; t <= horizon_; ++t) {
      out.v[t] = v_[t];
      out.v[t].resize(s_final, t == horizon_ ? 0.0 : v_up_[t]);
    }
    out.state_weights.assign(s_final, 0.0);
    for (std::size_t idx = 0; idx < cells_.size(); ++idx) {
      const Cell& c = cells_[idx];
      if (c.n + c.v > 0) {
        out.state_weights[idx / n_actions_] += static_cast<double>(c.n + c.v);
      }
    }
    out.episodes = episodes_;
    out.updates = updates_;
    out.termination = term;
    out.derived = derived_;
    out.trace = std::move(trace_);
    return out;
  }

 private:
  Cell& cell(int s, int a) {
    const std::size_t idx = static_cast<std::size_t>(s) * n_actions_ + a;
    if (idx >= cells_.size()) {
      cells_.resize(static_cast<std::size_t>(env_.state_count()) * n_actions_);
    }
    return cells_[idx];
  }

  const Cell* cell_ptr(int s, int a) const {
    const std::size_t idx = static_cast<std::size_t>(s) * n_actions_ + a;
    return idx < cells_.size() ? &cells_[idx] : nullptr;
  }

  bool qualifies(const Cell& c) const {
    const double need =
        std::max(static_cast<double>(derived_.m) * derived_.w_min, static_cast<double>(c.n));
    return static_cast<double>(c.v) >= need && static_cast<double>(c.n) < derived_.known_cap;
  }

  void mark_visited(int s) {
    if (dense_) return;
    if (s >= static_cast<int>(visited_.size())) visited_.resize(env_.state_count(), 0);
    if (!visited_[s]) {
      visited_[s] = 1;
      visited_list_.push_back(s);
    }
  }

  void run_episode(Rng& rng) {
    episode_pairs_.clear();
    int s = env_.sample_initial(rng);
    last_initial_ = s;
    for (int t = 0; t < horizon_; ++t) {
      mark_visited(s);
      const int a = s < static_cast<int>(policy_[t].size()) ? policy_[t][s] : 0;
      const int s2 = env_.sample_next(s, a, rng);
      Cell& c = cell(s, a);
      c.v += 1;
      slot_add(c.slot_v, s2, 1);
      episode_pairs_.push_back({s, a});
      s = s2;
    }
  }

  void commit(int s, int a) {
    Cell& c = cell(s, a);
    const std::int64_t before = c.n;
    c.n += c.v;
    c.v = 0;
    for (const auto& [id, cnt] : c.slot_v) slot_add(c.slot_n, id, cnt);
    c.slot_v.clear();
    build_cis(c, s, a);
    ++updates_;
    replan();
    if (cfg_.record_trace) {
      const double val = last_initial_ < static_cast<int>(v_[0].size()) ? v_[0][last_initial_]
                                                                        : v_up_[0];
      trace_.push_back({episodes_, s, a, before, c.n, val});
    }
  }

  void build_cis(Cell& c, int s, int a) {
    c.cis.clear();
    if (dense_) {
      const auto& row = env_.support(s, a);
      c.cis.reserve(row.size());
      for (const auto& [s2, p_true] : row) {
        (void)p_true;  // support identity only; probabilities stay unseen
        const double phat = static_cast<double>(slot_get(c.slot_n, s2)) / c.n;
        const auto ci = confidence_set(phat, c.n, derived_.delta1);
        c.cis.emplace_back(s2, ci.lo, ci.hi);
      }
      return;
    }
    c.cis.reserve(c.slot_n.size());
    for (const auto& [s2, cnt] : c.slot_n) {
      const double phat = static_cast<double>(cnt) / c.n;
      const auto ci = confidence_set(phat, c.n, derived_.delta1);
      c.cis.emplace_back(s2, ci.lo, ci.hi);
    }
    const double hi0 = confidence_set(0.0, c.n, derived_.delta1).hi;
    const double unseen = std::max(
        0.0, static_cast<double>(env_.state_space_bound()) - static_cast<double>(c.slot_n.size()));
    c.bucket_hi = std::min(1.0, hi0 * unseen);
  }

  double successor_value(int t, int s, int a) {
    const std::vector<double>& vnext = v_[t + 1];
    const Cell* c = cell_ptr(s, a);
    if (dense_) {
      if (c == nullptr || c->n == 0) {
        // Full optimism over the known support: all mass on the best successor.
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& [s2, p] : env_.support(s, a)) best = std::max(best, vnext[s2]);
        return best;
      }
      scratch_values_.clear();
      scratch_lo_.clear();
      scratch_hi_.clear();
      for (const auto& [s2, lo, hi] : c->cis) {
        scratch_values_.push_back(vnext[s2]);
        scratch_lo_.push_back(lo);
        scratch_hi_.push_back(hi);
      }
      return optimistic_allocation(scratch_values_, scratch_lo_, scratch_hi_);
    }
    if (c == nullptr || c->n == 0) return v_up_[t + 1];
    scratch_values_.clear();
    scratch_lo_.clear();
    scratch_hi_.clear();
    for (const auto& [s2, lo, hi] : c->cis) {
      const bool planned = s2 < static_cast<int>(visited_.size()) && visited_[s2] &&
                           s2 < static_cast<int>(vnext.size());
      scratch_values_.push_back(planned ? vnext[s2] : v_up_[t + 1]);
      scratch_lo_.push_back(lo);
      scratch_hi_.push_back(hi);
    }
    if (c->bucket_hi > 0.0) {
      scratch_values_.push_back(v_up_[t + 1]);
      scratch_lo_.push_back(0.0);
      scratch_hi_.push_back(c->bucket_hi);
    }
    return optimistic_allocation(scratch_values_, scratch_lo_, scratch_hi_);
  }

  void replan() {
    const int s_now = env_.state_count();
    v_[horizon_].assign(s_now, 0.0);
    for (int t = horizon_ - 1; t >= 0; --t) {
      v_[t].assign(s_now, dense_ ? 0.0 : v_up_[t]);
      policy_[t].assign(s_now, 0);
      if (dense_) {
        for (int s = 0; s < s_now; ++s) plan_state(t, s);
      } else {
        for (int s : visited_list_) plan_state(t, s);
      }
    }
  }

  void plan_state(int t, int s) {
    double best = -std::numeric_limits<double>::infinity();
    int best_a = 0;
    for (int a = 0; a < n_actions_; ++a) {
      const double q = env_.reward(t, s, a) + successor_value(t, s, a);
      if (q > best) {
        best = q;
        best_a = a;
      }
    }
    v_[t][s] = std::min(best, v_up_[t]);
    policy_[t][s] = best_a;
  }

  EpisodicEnv& env_;
  UcfhConfig cfg_;
  UcfhDerived derived_;
  bool dense_;
  int n_actions_;
  int horizon_;

  std::vector<Cell> cells_;
  std::vector<double> v_up_;
  std::vector<std::vector<double>> v_;
  std::vector<std::vector<int>> policy_;
  std::vector<char> visited_;
  std::vector<int> visited_list_;
  std::deque<std::pair<int, int>> queue_;
  std::vector<std::pair<int, int>> episode_pairs_;
  std::vector<UcfhTraceRow> trace_;
  std::vector<double> scratch_values_;
  std::vector<double> scratch_lo_;
  std::vector<double> scratch_hi_;
  std::int64_t episodes_ = 0;
  std::int64_t updates_ = 0;
  int last_initial_ = 0;
};

}  // namespace

UcfhResult ucfh_solve(EpisodicEnv& env, const UcfhConfig& cfg, Rng& rng) {
  Solver solver(env, cfg);
  return solver.solve(rng);
}

}  // namespace marl
