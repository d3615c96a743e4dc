#pragma once

#include "dyad/predictor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dyad::model {

// Binary layout (all integers uint32 little-endian):
//   "DYCK" | version | header_len | header JSON {"config": ..., "metadata": ...}
//   | tensor_count | per tensor: name_len | name | ndim | dims... | float32 data (row-major)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;  // row-major
};

struct Checkpoint {
  ModelConfig config;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

template <typename S>
NamedTensor to_tensor(const std::string& name, const ad::Mat<S>& m);
template <typename S>
ad::Mat<S> from_tensor(const NamedTensor& t);

template <typename S>
Checkpoint make_checkpoint(const DyadModel<S>& model, nlohmann::json metadata = nlohmann::json::object());

// Loads every model parameter by name; throws DataError on missing names or shape mismatch.
template <typename S>
void load_checkpoint_into(DyadModel<S>& model, const Checkpoint& checkpoint);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace dyad::model
