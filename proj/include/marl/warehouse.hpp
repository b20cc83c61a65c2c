#pragma once

#include <vector>

#include "marl/model.hpp"
#include "marl/rng.hpp"

namespace marl {

// Circular warehouse benchmark: zones on a ring, one dispatcher choosing a
// target zone, n homogeneous pickers moving clockwise/counterclockwise/staying.
// Kernels are row softmaxes of sparse logits; rewards favor co-location of
// pickers and dispatcher.
struct WarehouseParams {
  int n_zones = 5;
  int n_agents = 1000;
  double gamma = 0.95;

  // Global kernel logits: weight on the commanded zone, on staying put, and a
  // uniform base.
  double g_target = 3.0;
  double g_stay = 0.5;
  double g_base = 0.1;

  // Local kernel logits: weight on staying, on the zone the move action points
  // at, on the dispatcher's zone, and a uniform base.
  double l_stay = 3.5;
  double l_move = 1.5;
  double l_global = 0.3;
  double l_base = 0.1;

  // Rewards. Global: peak minus linear distance |s_g - a_g|. Local: aligned
  // payout when the picker shares the dispatcher zone, otherwise decays with
  // ring distance; per-action bonus for stay/clockwise/counterclockwise.
  double g_peak = 4.0;
  double aligned_reward = 10.0;
  double misaligned_scale = 2.0;
  double bonus_stay = 0.0;
  double bonus_cw = 0.5;
  double bonus_ccw = -0.3;

  // Concentration of the initial picker placement.
  double dirichlet_alpha = 0.3;

  // Adds +|min bonus| to every local reward so the team reward is nonnegative
  // for any zone count (argmax-invariant constant shift, recorded here).
  bool shift_nonneg = true;
  double nonneg_shift() const { return shift_nonneg ? -bonus_ccw : 0.0; }
};

// Ring distance min(|i - j|, z - |i - j|).
int circular_distance(int i, int j, int n_zones);

// Zone a move action points at: 0 stays, 1 steps clockwise, 2 counterclockwise.
int move_target(int zone, int action, int n_zones);

// Local reward base + bonus before the nonnegativity shift.
double warehouse_local_reward(const WarehouseParams& p, int sl, int sg, int al);

// Full model: softmax kernels, distance-shaped rewards, 3 local actions,
// |S_g| = |S_l| = |A_g| = n_zones.
ValidatedModel build_warehouse(const WarehouseParams& p);

// Initial picker zones: one Dirichlet(alpha) draw over zones, then n iid
// placements from it.
std::vector<int> dirichlet_init(const WarehouseParams& p, Rng& rng);

}  // namespace marl
