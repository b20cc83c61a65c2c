#include "marl/rng.hpp"

#include <algorithm>
#include <numeric>

namespace marl {

std::vector<int> sample_subset(int n, int k, Rng& rng) {
  if (k < 0 || k > n) throw std::invalid_argument("sample_subset: need 0 <= k <= n");
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + rng.next_below(n - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> subset(pool.begin(), pool.begin() + k);
  std::sort(subset.begin(), subset.end());
  return subset;
}

}  // namespace marl
