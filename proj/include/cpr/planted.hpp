#pragma once

#include <span>
#include <vector>

#include "cpr/domain.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

// Ground-truth utility behind synthetic drafts: every card has a latent
// vector; a card's value in context is its dot product with the mean latent of
// the pool (or with a fixed seed vector when the pool is empty).
struct PlantedUtility {
  Tensor latents;                   // [M,r]
  std::vector<double> seed_vector;  // [r]

  double score(std::span<const CardId> pool, CardId card) const;
  std::vector<double> context(std::span<const CardId> pool) const;
};

}  // namespace cpr
