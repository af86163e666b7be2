#pragma once

#include <random>
#include <vector>

#include "hydra/tensor/tensor.hpp"

namespace hydra::fixtures {

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = dist(rng);
    return ad::Tensor::from(std::move(shape), std::move(v));
}

/// Values bounded away from zero so relu/abs kinks sit outside the
/// finite-difference stencil.
inline ad::Tensor random_away_from_zero(ad::Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
    return ad::Tensor::from(std::move(shape), std::move(v));
}

/// sum(out * w) with a fixed random w, so every output element carries a
/// distinct weight in the scalar probe.
inline ad::Tensor weighted_sum(const ad::Tensor& out, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    auto w = random_tensor(out.shape(), rng, 0.5, 1.5);
    return ad::sum(ad::mul(out, w));
}

}  // namespace hydra::fixtures
