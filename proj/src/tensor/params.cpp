#include "hydra/tensor/params.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hydra::ad {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

Tensor ParamStore::create(const std::string& name, Shape shape, Init init, std::size_t fan_in, double gain) {
    if (tensors_.count(name)) throw std::logic_error("params: duplicate name " + name);
    std::vector<double> values(numel(shape), 0.0);
    switch (init) {
        case Init::zeros:
            break;
        case Init::ones:
            std::fill(values.begin(), values.end(), 1.0);
            break;
        case Init::uniform: {
            const std::uint64_t h = fnv1a(name);
            std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                              static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
            std::mt19937_64 rng(seq);
            const double a = gain * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
            // 53-bit mantissa draw; avoids implementation-defined distributions
            for (auto& v : values) v = a * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
            break;
        }
    }
    auto t = Tensor::parameter(std::move(shape), std::move(values));
    tensors_.emplace(name, t);
    return t;
}

Tensor ParamStore::create_constant(const std::string& name, Shape shape, double value) {
    if (tensors_.count(name)) throw std::logic_error("params: duplicate name " + name);
    auto t = Tensor::parameter(shape, std::vector<double>(numel(shape), value));
    tensors_.emplace(name, t);
    return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("params: no tensor named " + name);
    return it->second;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_) n += t.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : tensors_) {
        Tensor handle = t;
        handle.zero_grad();
    }
}

void ParamStore::load(const TensorMap& values) {
    if (values.size() != tensors_.size()) {
        throw ShapeError("params: checkpoint has " + std::to_string(values.size()) + " tensors, model has " +
                         std::to_string(tensors_.size()));
    }
    for (auto& [name, t] : tensors_) {
        auto it = values.find(name);
        if (it == values.end()) throw ShapeError("params: checkpoint lacks " + name);
        if (it->second.shape() != t.shape()) {
            throw ShapeError("params: " + name + " has shape " + to_string(it->second.shape()) +
                             " in checkpoint, model expects " + to_string(t.shape()));
        }
        Tensor handle = t;
        auto dst = handle.mutable_data();
        std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
    }
}

}  // namespace hydra::ad
