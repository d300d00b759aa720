#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilioseg/autograd/ops.hpp"

namespace ilio {

// Encoder-decoder layout
//   I -> D(2,32) -> D(3,64) -> D(3,128) -> L -> U(3,128) -> U(3,64) -> U(3,32) -> F
// with filter counts scaled by `width` (1.0 gives 8/16/32/64/128).
struct ArchitectureSpec {
  std::array<std::size_t, 3> input_dims{96, 96, 192};
  double width = 1.0;

  static ArchitectureSpec paper() { return {}; }
  static ArchitectureSpec desk() { return {{32, 32, 64}, 0.25}; }

  // Scaled filter count for a paper-scale base count; never below 1.
  std::size_t filters(std::size_t base) const;
  // Throws SpecError when dims are not divisible by 16 or width is not positive.
  void validate() const;

  nlohmann::json to_json() const;
  static ArchitectureSpec from_json(const nlohmann::json& j);
  // FNV-1a over the canonical JSON form.
  std::string digest() const;
  bool operator==(const ArchitectureSpec&) const = default;
};

struct CheckpointMetadata {
  std::uint64_t seed = 0;
  std::string config_digest;
};

template <typename T>
struct NamedParameter {
  std::string name;
  ag::Tensor<T> tensor;
};

template <typename T>
class VNet {
 public:
  // Gaussian weights with SD 1/sqrt(fan-in), zero biases; deterministic in seed.
  static VNet build(const ArchitectureSpec& spec, std::uint64_t seed);

  const ArchitectureSpec& spec() const { return spec_; }
  CheckpointMetadata& metadata() { return metadata_; }
  const CheckpointMetadata& metadata() const { return metadata_; }

  // (batch, 1, x, y, z) -> probabilities of the same shape. When `stage_dims`
  // is given it receives the spatial dims after I, D1-3, L, U1-3 and F.
  ag::Tensor<T> forward(const ag::Tensor<T>& input,
                        std::vector<std::array<std::size_t, 3>>* stage_dims = nullptr) const;

  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::vector<ag::Tensor<T>> parameter_tensors() const;
  std::size_t count_parameters() const;
  void zero_grad();

 private:
  struct Block {
    std::vector<ag::ConvKernel<T>> convs;
    ag::ConvKernel<T> projection;  // undefined weight when channels already match
    ag::ConvKernel<T> resample;    // stride-2 conv or transpose conv; unused in F
    ag::ConvKernel<T> head;        // F only: final 1x1x1 conv
  };

  ag::Tensor<T> run_convs(const Block& b, const ag::Tensor<T>& x) const;
  ag::Tensor<T> residual(const Block& b, const ag::Tensor<T>& in, const ag::Tensor<T>& out) const;
  void register_kernel(const std::string& name, ag::ConvKernel<T>& k);

  ArchitectureSpec spec_;
  CheckpointMetadata metadata_;
  std::vector<Block> encoder_;  // I, D1, D2, D3
  Block bottom_;                // L
  std::vector<Block> decoder_;  // U1, U2, U3
  Block final_;                 // F
  std::vector<NamedParameter<T>> params_;
};

template <typename T>
std::size_t count_parameters(const VNet<T>& model) {
  return model.count_parameters();
}

// Header: one JSON line with architecture, metadata and a (name, shape,
// offset, count) manifest; payload: little-endian parameter values.
template <typename T>
void save_checkpoint(const VNet<T>& model, const std::filesystem::path& path);

template <typename T>
VNet<T> load_checkpoint(const std::filesystem::path& path);

std::string fnv1a64_hex(std::string_view bytes);

}  // namespace ilio
