#pragma once

#include "bilinear/goblin.hpp"
#include "bilinear/multitask.hpp"

namespace bilinear {

/// Phased elimination on vec(x z^T) in R^{d1 d2}, treating the problem as
/// linear: Lambda = lam I, B = 8 sqrt(lam) S, no subspace stage.
RunRecord run_rage_ambient(const BilinearInstance& instance, const GoblinConfig& cfg, Rng& rng);

/// Shared extractor stage, then per-task elimination in the k1 k2 latent
/// linear space without rotation.
MultiRunRecord run_doubexpdes_like(const MultiTaskInstance& instance, const MultiTaskConfig& cfg, Rng& rng);

}  // namespace bilinear
