#include "marl/qlearn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace marl {

double QTable::max_at(int sg, std::int64_t key) const {
  auto r = row(sg, key);
  double best = r[0];
  for (int a = 1; a < n_ag; ++a) best = std::max(best, r[a]);
  return best;
}

QTable QTable::zeros(Parameterization param, int k, const ModelSpec& model) {
  QTable q;
  q.param = param;
  q.k = k;
  q.n_sg = model.n_sg;
  q.n_sl = model.n_sl;
  q.n_ag = model.n_ag;
  q.n_keys = key_count(param, k, model.n_sl);
  q.values.assign(static_cast<std::size_t>(q.n_sg) * q.n_keys * q.n_ag, 0.0);
  return q;
}

Parameterization choose_parameterization(int n_sl, int k) {
  if (n_sl < 1 || k < 1) throw std::invalid_argument("choose_parameterization: bad arguments");
  double lhs = k * std::log(static_cast<double>(n_sl));
  double rhs = std::log(static_cast<double>(n_sl)) + n_sl * std::log(static_cast<double>(k));
  return lhs <= rhs ? Parameterization::kStandard : Parameterization::kMeanField;
}

namespace {

// Local-state tuples per key, shared by the sweeps. Standard keys decode to
// the tuple digits; mean-field keys use the sorted representative, which has
// the same successor-histogram law as any tuple with that histogram.
std::vector<std::vector<int>> tuples_per_key(const QTable& q) {
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
  return tuples;
}

void check_sweep_args(const QTable& q, const ModelSpec& model,
                      const PolicyGuidedKernel& kernel, int m) {
  if (q.n_sg != model.n_sg || q.n_sl != model.n_sl || q.n_ag != model.n_ag) {
    throw std::invalid_argument("sweep: Q table and model dimensions disagree");
  }
  if (kernel.n_sl != model.n_sl || kernel.n_sg != model.n_sg) {
    throw std::invalid_argument("sweep: kernel and model dimensions disagree");
  }
  if (m < 1) throw std::invalid_argument("sweep: m must be >= 1");
}

// Draws one joint successor of (sg, tuple) and returns max_a' q(sg', key').
double sampled_successor_max(const QTable& q, const ModelSpec& model,
                             const PolicyGuidedKernel& kernel, const HistogramCoder* coder,
                             int sg, std::span<const double> pg_row,
                             std::span<const int> tuple, std::vector<int>& counts,
                             Rng& sub) {
  int sg2 = sample_index(pg_row, sub);
  std::int64_t key2;
  if (q.param == Parameterization::kStandard) {
    key2 = 0;
    for (int i = 0; i < q.k; ++i) {
      key2 = key2 * q.n_sl + sample_index(kernel.row(tuple[i], sg), sub);
    }
  } else {
    counts.assign(model.n_sl, 0);
    for (int i = 0; i < q.k; ++i) counts[sample_index(kernel.row(tuple[i], sg), sub)]++;
    key2 = coder->index_of(counts);
  }
  return q.max_at(sg2, key2);
}

}  // namespace

QTable empirical_bellman_sweep(const QTable& q, const ModelSpec& model,
                               const PolicyGuidedKernel& kernel,
                               const SurrogateLocalReward& rbar, int m, Rng& rng) {
  check_sweep_args(q, model, kernel, m);
  if (rbar.n_sl != model.n_sl || rbar.n_sg != model.n_sg) {
    throw std::invalid_argument("sweep: surrogate reward dimensions disagree");
  }
  QTable out = q;
  auto tuples = tuples_per_key(q);
  HistogramCoder coder(q.k, q.n_sl);
  std::uint64_t sweep_seed = rng.next_u64();

  std::vector<int> counts(q.n_sl);
  for (int sg = 0; sg < q.n_sg; ++sg) {
    for (std::int64_t key = 0; key < q.n_keys; ++key) {
      const auto& tuple = tuples[static_cast<std::size_t>(key)];
      double local_mean = 0.0;
      for (int s : tuple) local_mean += rbar.at(s, sg);
      local_mean /= q.k;
      for (int ag = 0; ag < q.n_ag; ++ag) {
        std::size_t cell = out.cell_index(sg, key, ag);
        Rng sub(Rng::mix(sweep_seed, cell));
        auto pg_row = model.pg.row(sg, ag);
        double acc = 0.0;
        for (int j = 0; j < m; ++j) {
          acc += sampled_successor_max(q, model, kernel, &coder, sg, pg_row, tuple,
                                       counts, sub);
        }
        out.values[cell] = model.global_reward(sg, ag) + local_mean +
                           model.gamma * acc / m;
      }
    }
  }
  return out;
}

GlobalPolicy greedy_policy(const QTable& q) {
  GlobalPolicy pi;
  pi.param = q.param;
  pi.k = q.k;
  pi.n_sg = q.n_sg;
  pi.n_sl = q.n_sl;
  pi.n_ag = q.n_ag;
  pi.n_keys = q.n_keys;
  pi.dist.assign(q.values.size(), 0.0);
  for (int sg = 0; sg < q.n_sg; ++sg) {
    for (std::int64_t key = 0; key < q.n_keys; ++key) {
      auto r = q.row(sg, key);
      int best = 0;
      for (int a = 1; a < q.n_ag; ++a) {
        if (r[a] > r[best]) best = a;
      }
      pi.dist[q.cell_index(sg, key, best)] = 1.0;
    }
  }
  return pi;
}

ValueTable approx_value(const GlobalPolicy& pi_g, const QTable& q) {
  if (pi_g.param != q.param || pi_g.k != q.k || pi_g.n_sg != q.n_sg ||
      pi_g.n_keys != q.n_keys || pi_g.n_ag != q.n_ag) {
    throw std::invalid_argument("approx_value: policy and Q table keyed differently");
  }
  ValueTable v;
  v.param = q.param;
  v.k = q.k;
  v.n_sg = q.n_sg;
  v.n_sl = q.n_sl;
  v.n_keys = q.n_keys;
  v.values.assign(static_cast<std::size_t>(q.n_sg) * q.n_keys, 0.0);
  for (int sg = 0; sg < q.n_sg; ++sg) {
    for (std::int64_t key = 0; key < q.n_keys; ++key) {
      double acc = 0.0;
      auto pr = pi_g.row(sg, key);
      auto qr = q.row(sg, key);
      for (int a = 0; a < q.n_ag; ++a) acc += pr[a] * qr[a];
      v.values[static_cast<std::size_t>(sg) * q.n_keys + key] = acc;
    }
  }
  return v;
}

GLearnResult g_learn(const ValidatedModel& model, const LocalPolicy& pi_l,
                     const GLearnConfig& cfg, Rng& rng) {
  if (cfg.k < 1 || cfg.k > model->n_agents) {
    throw std::invalid_argument("g_learn: need 1 <= k <= n_agents");
  }
  if (cfg.t_iters < 1) throw std::invalid_argument("g_learn: t_iters must be >= 1");
  Parameterization param = choose_parameterization(model->n_sl, cfg.k);
  PolicyGuidedKernel kernel = policy_guided_kernel(model->pl, pi_l);
  SurrogateLocalReward rbar = surrogate_local_reward(model.spec(), pi_l);
  QTable q = QTable::zeros(param, cfg.k, model.spec());
  for (int t = 0; t < cfg.t_iters; ++t) {
    q = empirical_bellman_sweep(q, model.spec(), kernel, rbar, cfg.m, rng);
  }
  GLearnResult result;
  result.policy = greedy_policy(q);
  result.value = approx_value(result.policy, q);
  result.q = std::move(q);
  return result;
}

void off_policy_update(QTable& q, int sg, std::int64_t key, int ag, double reward,
                       int sg_next, std::int64_t key_next, double alpha, double gamma) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("off_policy_update: alpha must lie in [0, 1]");
  }
  double target = reward + gamma * q.max_at(sg_next, key_next);
  double& cell = q.at(sg, key, ag);
  cell = (1.0 - alpha) * cell + alpha * target;
}

QTable averaged_stochastic_sweep(const QTable& q, const ModelSpec& model,
                                 const PolicyGuidedKernel& kernel,
                                 const RewardSampler& sampler, int m, std::int64_t xi,
                                 Rng& rng) {
  check_sweep_args(q, model, kernel, m);
  if (xi < 1) throw std::invalid_argument("averaged_stochastic_sweep: xi must be >= 1");
  if (!sampler.global || !sampler.local) {
    throw std::invalid_argument("averaged_stochastic_sweep: sampler callbacks missing");
  }
  QTable out = q;
  auto tuples = tuples_per_key(q);
  HistogramCoder coder(q.k, q.n_sl);
  std::uint64_t sweep_seed = rng.next_u64();

  std::vector<int> counts(q.n_sl);
  for (int sg = 0; sg < q.n_sg; ++sg) {
    for (std::int64_t key = 0; key < q.n_keys; ++key) {
      const auto& tuple = tuples[static_cast<std::size_t>(key)];
      for (int ag = 0; ag < q.n_ag; ++ag) {
        std::size_t cell = out.cell_index(sg, key, ag);
        Rng sub(Rng::mix(sweep_seed, cell));
        auto pg_row = model.pg.row(sg, ag);
        double total = 0.0;
        for (std::int64_t x = 0; x < xi; ++x) {
          double reward = sampler.global(sg, ag, sub);
          double local_sum = 0.0;
          for (int s : tuple) local_sum += sampler.local(s, sg, sub);
          double acc = 0.0;
          for (int j = 0; j < m; ++j) {
            acc += sampled_successor_max(q, model, kernel, &coder, sg, pg_row, tuple,
                                         counts, sub);
          }
          total += reward + local_sum / q.k + model.gamma * acc / m;
        }
        out.values[cell] = total / xi;
      }
    }
  }
  return out;
}

void save_qtable(const QTable& q, const std::string& path) {
  nlohmann::json j{
      {"parameterization", q.param == Parameterization::kStandard ? "standard" : "mean_field"},
      {"k", q.k},
      {"n_sg", q.n_sg},
      {"n_sl", q.n_sl},
      {"n_ag", q.n_ag},
      {"n_keys", q.n_keys},
      {"values", q.values}};
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("save_qtable: cannot open " + path);
  out << j.dump() << "\n";
}

QTable load_qtable(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_qtable: cannot open " + path);
  nlohmann::json j;
  in >> j;
  QTable q;
  std::string tag = j.at("parameterization").get<std::string>();
  if (tag == "standard") {
    q.param = Parameterization::kStandard;
  } else if (tag == "mean_field") {
    q.param = Parameterization::kMeanField;
  } else {
    throw std::invalid_argument("load_qtable: unknown parameterization tag " + tag);
  }
  q.k = j.at("k").get<int>();
  q.n_sg = j.at("n_sg").get<int>();
  q.n_sl = j.at("n_sl").get<int>();
  q.n_ag = j.at("n_ag").get<int>();
  q.n_keys = j.at("n_keys").get<std::int64_t>();
  q.values = j.at("values").get<std::vector<double>>();
  if (q.n_keys != key_count(q.param, q.k, q.n_sl) ||
      q.values.size() != static_cast<std::size_t>(q.n_sg) * q.n_keys * q.n_ag) {
    throw std::invalid_argument("load_qtable: dimensions inconsistent with value count");
  }
  return q;
}

}  // namespace marl
