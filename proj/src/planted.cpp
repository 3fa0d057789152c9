#include "cpr/planted.hpp"

namespace cpr {

std::vector<double> PlantedUtility::context(std::span<const CardId> pool) const {
  if (pool.empty()) return seed_vector;
  const std::size_t r = latents.cols();
  std::vector<double> mean(r, 0.0);
  for (CardId c : pool) {
    const auto v = latents.row(index_of(c));
    for (std::size_t k = 0; k < r; ++k) mean[k] += v[k];
  }
  for (double& x : mean) x /= static_cast<double>(pool.size());
  return mean;
}

double PlantedUtility::score(std::span<const CardId> pool, CardId card) const {
  const auto ctx = context(pool);
  const auto v = latents.row(index_of(card));
  double s = 0.0;
  for (std::size_t k = 0; k < ctx.size(); ++k) s += v[k] * ctx[k];
  return s;
}

}  // namespace cpr
