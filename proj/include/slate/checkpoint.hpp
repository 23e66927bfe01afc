#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slate/model.hpp"

namespace slate {

// Versioned named-tensor container:
//   "SLCK" | u16 version | u16 reserved | u32 len + JSON header | u64 step |
//   u32 count | count x (u32 len + name | u8 rank | rank x u32 dim | f32 data)
// All integers and floats little-endian. The JSON header holds
// {"model": ModelConfig, "meta": free-form}.
struct Checkpoint {
  ModelConfig model;
  nlohmann::json meta = nlohmann::json::object();
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  // nullptr when absent.
  const Tensor<float>* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters in canonical order, rounded to float32.
template <typename T>
Checkpoint make_checkpoint(const SlateModel<T>& model);

// Copies every model parameter from the checkpoint by name. Throws
// FormatError when a tensor is missing or has the wrong shape.
template <typename T>
void load_parameters(SlateModel<T>& model, const Checkpoint& c);

template <typename T>
SlateModel<T> model_from_checkpoint(const Checkpoint& c);

}  // namespace slate
