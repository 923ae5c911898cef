#pragma once

#include "bilinear/multitask.hpp"

namespace bilinear::detail {

/// Shared multi-task driver. With `rotate_latent` false the per-task stage
/// runs directly in the k1 k2 latent space with Lambda = lam I.
MultiRunRecord run_multi_impl(const MultiTaskInstance& instance, const MultiTaskConfig& cfg, Rng& rng,
                              bool rotate_latent);

}  // namespace bilinear::detail
