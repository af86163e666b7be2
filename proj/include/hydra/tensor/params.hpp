#pragma once

#include <cstdint>
#include <string>

#include "hydra/tensor/checkpoint.hpp"
#include "hydra/tensor/tensor.hpp"

namespace hydra::ad {

enum class Init {
    zeros,
    ones,
    uniform,  // U(-a, a), a = gain * sqrt(3 / fan_in)
};

/// Named trainable tensors. Each tensor's initial values depend only on
/// (seed, name, shape), so models that share a parameter name start from
/// identical values regardless of what else they contain.
class ParamStore {
  public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    Tensor create(const std::string& name, Shape shape, Init init, std::size_t fan_in = 1,
                  double gain = 1.0);
    Tensor create_constant(const std::string& name, Shape shape, double value);

    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    const TensorMap& tensors() const { return tensors_; }
    std::size_t parameter_count() const;

    void zero_grad();
    /// Overwrites values from a checkpoint; names and shapes must match.
    void load(const TensorMap& values);

  private:
    std::uint64_t seed_;
    TensorMap tensors_;
};

}  // namespace hydra::ad
