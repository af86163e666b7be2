#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "hydra/tensor/tensor.hpp"

namespace hydra::ad {

class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Single tensor record:
///   "HYDT" | version u32 | rank u32 | extents u64[rank] | f64[numel]
/// All integers and floats little-endian.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Named collection: "HYDB" | version u32 | count u32 | entries, each entry
/// being name length u32, UTF-8 name bytes, then one tensor record.
/// Entries are written in key order.
using TensorMap = std::map<std::string, Tensor>;

void write_bundle(std::ostream& os, const TensorMap& tensors);
TensorMap read_bundle(std::istream& is);

void save_bundle(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_bundle(const std::filesystem::path& path);

}  // namespace hydra::ad
