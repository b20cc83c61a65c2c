#include "marl/warehouse.hpp"

#include <cmath>
#include <stdexcept>

namespace marl {

int circular_distance(int i, int j, int n_zones) {
  int d = std::abs(i - j);
  return std::min(d, n_zones - d);
}

int move_target(int zone, int action, int n_zones) {
  if (action == 1) return (zone + 1) % n_zones;
  if (action == 2) return (zone - 1 + n_zones) % n_zones;
  return zone;
}

double warehouse_local_reward(const WarehouseParams& p, int sl, int sg, int al) {
  if (sl < 0 || sl >= p.n_zones || sg < 0 || sg >= p.n_zones || al < 0 || al > 2) {
    throw std::out_of_range("warehouse_local_reward: index out of range");
  }
  double base = sl == sg ? p.aligned_reward
                         : p.misaligned_scale / (1.0 + circular_distance(sl, sg, p.n_zones));
  double bonus = al == 1 ? p.bonus_cw : (al == 2 ? p.bonus_ccw : p.bonus_stay);
  return base + bonus;
}

namespace {

void softmax_inplace(double* row, int n) {
  double mx = row[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  for (int i = 0; i < n; ++i) row[i] /= sum;
}

}  // namespace

ValidatedModel build_warehouse(const WarehouseParams& p) {
  if (p.n_zones < 2) throw std::invalid_argument("build_warehouse: need at least 2 zones");
  if (p.n_agents < 1) throw std::invalid_argument("build_warehouse: need at least 1 agent");
  int z = p.n_zones;
  ModelSpec spec;
  spec.n_agents = p.n_agents;
  spec.n_sg = z;
  spec.n_sl = z;
  spec.n_ag = z;
  spec.n_al = 3;
  spec.gamma = p.gamma;

  spec.pg.n_sg = z;
  spec.pg.n_ag = z;
  spec.pg.probs.assign(static_cast<std::size_t>(z) * z * z, 0.0);
  for (int sg = 0; sg < z; ++sg) {
    for (int ag = 0; ag < z; ++ag) {
      double* row = spec.pg.probs.data() + (static_cast<std::size_t>(sg) * z + ag) * z;
      for (int sg2 = 0; sg2 < z; ++sg2) {
        row[sg2] = p.g_target * (sg2 == ag) + p.g_stay * (sg2 == sg) + p.g_base;
      }
      softmax_inplace(row, z);
    }
  }

  spec.pl.n_sl = z;
  spec.pl.n_sg = z;
  spec.pl.n_al = 3;
  spec.pl.probs.assign(static_cast<std::size_t>(z) * z * 3 * z, 0.0);
  for (int sl = 0; sl < z; ++sl) {
    for (int sg = 0; sg < z; ++sg) {
      for (int a = 0; a < 3; ++a) {
        double* row =
            spec.pl.probs.data() + ((static_cast<std::size_t>(sl) * z + sg) * 3 + a) * z;
        int target = move_target(sl, a, z);
        for (int sl2 = 0; sl2 < z; ++sl2) {
          row[sl2] = p.l_stay * (sl2 == sl) + p.l_move * (a != 0 && sl2 == target) +
                     p.l_global * (sl2 == sg) + p.l_base;
        }
        softmax_inplace(row, z);
      }
    }
  }

  spec.rg.resize(static_cast<std::size_t>(z) * z);
  for (int sg = 0; sg < z; ++sg) {
    for (int ag = 0; ag < z; ++ag) {
      spec.rg[static_cast<std::size_t>(sg) * z + ag] = p.g_peak - std::abs(sg - ag);
    }
  }

  double shift = p.nonneg_shift();
  spec.rl.resize(static_cast<std::size_t>(z) * z * 3);
  for (int sl = 0; sl < z; ++sl) {
    for (int sg = 0; sg < z; ++sg) {
      for (int a = 0; a < 3; ++a) {
        spec.rl[(static_cast<std::size_t>(sl) * z + sg) * 3 + a] =
            warehouse_local_reward(p, sl, sg, a) + shift;
      }
    }
  }

  return validate_model(std::move(spec));
}

std::vector<int> dirichlet_init(const WarehouseParams& p, Rng& rng) {
  std::vector<double> weights = sample_dirichlet(p.dirichlet_alpha, p.n_zones, rng);
  std::vector<int> zones(p.n_agents);
  for (int i = 0; i < p.n_agents; ++i) zones[i] = sample_index(weights, rng);
  return zones;
}

}  // namespace marl
