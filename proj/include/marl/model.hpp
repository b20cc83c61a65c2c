#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "marl/rng.hpp"

namespace marl {

// Global transition kernel, rows (s_g, a_g) over successor global states.
struct GlobalKernel {
  int n_sg = 0;
  int n_ag = 0;
  std::vector<double> probs;  // (s_g, a_g, s_g') row-major

  double at(int sg, int ag, int sg2) const {
    return probs[(static_cast<std::size_t>(sg) * n_ag + ag) * n_sg + sg2];
  }
  std::span<const double> row(int sg, int ag) const {
    return {probs.data() + (static_cast<std::size_t>(sg) * n_ag + ag) * n_sg,
            static_cast<std::size_t>(n_sg)};
  }
};

// Local transition kernel, rows (s_l, s_g, a_l) over successor local states.
// All agents are homogeneous and share this kernel.
struct LocalKernel {
  int n_sl = 0;
  int n_sg = 0;
  int n_al = 0;
  std::vector<double> probs;  // (s_l, s_g, a_l, s_l') row-major

  double at(int sl, int sg, int al, int sl2) const {
    return probs[((static_cast<std::size_t>(sl) * n_sg + sg) * n_al + al) * n_sl + sl2];
  }
  std::span<const double> row(int sl, int sg, int al) const {
    return {probs.data() + ((static_cast<std::size_t>(sl) * n_sg + sg) * n_al + al) * n_sl,
            static_cast<std::size_t>(n_sl)};
  }
};

// Cooperative global/local game: one global state driven by the dispatcher
// action, n homogeneous local agents driven by their own actions, team reward
// r_g(s_g, a_g) + (1/n) sum_i r_l(s_i, s_g, a_i), discount gamma.
struct ModelSpec {
  int n_agents = 0;
  int n_sg = 0;
  int n_sl = 0;
  int n_ag = 0;
  int n_al = 0;
  double gamma = 0.0;
  GlobalKernel pg;
  LocalKernel pl;
  std::vector<double> rg;  // (s_g, a_g)
  std::vector<double> rl;  // (s_l, s_g, a_l)

  double global_reward(int sg, int ag) const {
    return rg[static_cast<std::size_t>(sg) * n_ag + ag];
  }
  double local_reward(int sl, int sg, int al) const {
    return rl[(static_cast<std::size_t>(sl) * n_sg + sg) * n_al + al];
  }
  double max_global_reward() const;
  double max_local_reward() const;
  // Bound r_max on the per-step team reward; Q values live in [0, r_max/(1-gamma)].
  double max_step_reward() const { return max_global_reward() + max_local_reward(); }
};

// Wrapper certifying a ModelSpec passed validate_model; operations take this
// type so dimension and stochasticity checks happen exactly once.
class ValidatedModel {
 public:
  const ModelSpec& spec() const { return spec_; }
  const ModelSpec* operator->() const { return &spec_; }

 private:
  friend ValidatedModel validate_model(ModelSpec spec);
  explicit ValidatedModel(ModelSpec spec) : spec_(std::move(spec)) {}
  ModelSpec spec_;
};

// Checks dimensions, row stochasticity (1e-12 tolerance), gamma in (0,1) and
// reward finiteness. Throws std::invalid_argument naming the first violated
// invariant and its indices.
ValidatedModel validate_model(ModelSpec spec);

// Shared local-agent policy: distribution over A_l per (s_l, s_g).
struct LocalPolicy {
  int n_sl = 0;
  int n_sg = 0;
  int n_al = 0;
  std::vector<double> dist;  // (s_l, s_g, a_l) row-major

  std::span<const double> row(int sl, int sg) const {
    return {dist.data() + (static_cast<std::size_t>(sl) * n_sg + sg) * n_al,
            static_cast<std::size_t>(n_al)};
  }
  double prob(int al, int sl, int sg) const { return row(sl, sg)[al]; }
  int sample(int sl, int sg, Rng& rng) const { return sample_index(row(sl, sg), rng); }
  // Highest-probability action, lowest index on ties.
  int mode_action(int sl, int sg) const;

  static LocalPolicy uniform(int n_sl, int n_sg, int n_al);
  // Deterministic policy from an action table indexed (s_l, s_g).
  static LocalPolicy from_actions(int n_sl, int n_sg, int n_al, const std::vector<int>& actions);
};

enum class Parameterization { kStandard, kMeanField };

// Integer-count histogram of k local states over n_sl bins.
struct Histogram {
  std::vector<int> counts;

  int total() const;
  bool operator==(const Histogram& other) const { return counts == other.counts; }
};

// Histogram of a local-state tuple.
Histogram histogram_of(std::span<const int> tuple, int n_sl);

// Total-variation distance between two count histograms (normalized to
// frequencies internally; totals may differ).
double tv_distance(const Histogram& a, const Histogram& b);

// All histograms of k items over n_sl bins, in the canonical enumeration
// order: first coordinate descending, recursively. Index 0 is (k, 0, ..., 0).
std::vector<Histogram> enumerate_histograms(int k, int n_sl);

// Number of histograms of k items over n_sl bins: C(k + n_sl - 1, n_sl - 1).
std::int64_t n_histograms(int k, int n_sl);

// Rank of a histogram in the enumerate_histograms order.
std::int64_t histogram_index(const Histogram& h);

// Sorted-ascending local-state tuple realizing the histogram.
std::vector<int> representative_tuple(const Histogram& h);

// Exact binomial coefficient (throws on overflow past 2^63).
std::int64_t binomial(int n, int r);

// Precomputed ranking tables for histograms of k items over n_sl bins; makes
// histogram_index O(n_sl) per call inside sampling loops.
class HistogramCoder {
 public:
  HistogramCoder(int k, int n_sl);
  std::int64_t index_of(std::span<const int> counts) const;
  int k() const { return k_; }
  int bins() const { return bins_; }

 private:
  int k_;
  int bins_;
  std::vector<std::int64_t> contrib_;  // (slot, remaining, count) flattened
};

// Mixed-radix code of a k-tuple of local states, first coordinate most
// significant. Throws if n_sl^k would overflow the key range.
std::int64_t encode_tuple(std::span<const int> tuple, int n_sl);
std::vector<int> decode_tuple(std::int64_t code, int k, int n_sl);

// Number of Q/policy keys for a parameterization.
std::int64_t key_count(Parameterization param, int k, int n_sl);

// Key of a concrete local-state tuple under a parameterization.
std::int64_t key_of(Parameterization param, std::span<const int> tuple, int n_sl);

// Dispatcher policy over A_g keyed by (s_g, key) where key encodes the
// subsampled k-tuple (standard) or its histogram (mean-field).
struct GlobalPolicy {
  Parameterization param = Parameterization::kStandard;
  int k = 0;
  int n_sg = 0;
  int n_sl = 0;
  int n_ag = 0;
  std::int64_t n_keys = 0;
  std::vector<double> dist;  // (s_g, key, a_g) row-major

  std::span<const double> row(int sg, std::int64_t key) const {
    return {dist.data() + (static_cast<std::size_t>(sg) * n_keys + key) * n_ag,
            static_cast<std::size_t>(n_ag)};
  }
  int sample(int sg, std::int64_t key, Rng& rng) const {
    return sample_index(row(sg, key), rng);
  }
  // Highest-probability action, lowest index on ties.
  int mode_action(int sg, std::int64_t key) const;

  static GlobalPolicy uniform(Parameterization param, int k, int n_sg, int n_sl, int n_ag);
};

// Local kernel with the agent action integrated out under pi_l:
// row (s_l, s_g) = E_{a ~ pi_l(s_l, s_g)} P_l(. | s_l, s_g, a).
struct PolicyGuidedKernel {
  int n_sl = 0;
  int n_sg = 0;
  std::vector<double> probs;  // (s_l, s_g, s_l') row-major

  double at(int sl, int sg, int sl2) const {
    return probs[(static_cast<std::size_t>(sl) * n_sg + sg) * n_sl + sl2];
  }
  std::span<const double> row(int sl, int sg) const {
    return {probs.data() + (static_cast<std::size_t>(sl) * n_sg + sg) * n_sl,
            static_cast<std::size_t>(n_sl)};
  }
};

PolicyGuidedKernel policy_guided_kernel(const LocalKernel& pl, const LocalPolicy& pi_l);

// Expected local reward with the agent action integrated out under pi_l,
// indexed (s_l, s_g).
struct SurrogateLocalReward {
  int n_sl = 0;
  int n_sg = 0;
  std::vector<double> values;

  double at(int sl, int sg) const { return values[static_cast<std::size_t>(sl) * n_sg + sg]; }
};

SurrogateLocalReward surrogate_local_reward(const ModelSpec& model, const LocalPolicy& pi_l);

// JSON round-trip. Field names: n_agents, n_sg, n_sl, n_ag, n_al, gamma,
// pg, pl, rg, rl with tables flattened row-major in the orders documented on
// the kernel structs. load_model validates.
ValidatedModel load_model(const std::string& path);
void save_model(const ValidatedModel& model, const std::string& path);
std::string model_to_json_string(const ValidatedModel& model);
ValidatedModel model_from_json_string(const std::string& text);

}  // namespace marl
