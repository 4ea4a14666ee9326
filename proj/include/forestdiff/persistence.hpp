#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "forestdiff/model.hpp"

namespace forestdiff {

// Model container layout (all integers little-endian, doubles as IEEE-754
// bit patterns, strings as u32 length + bytes):
//
//   magic "FDIFMODL" | u32 format version
//   schema            | process, n_t, beta_min, beta_max, n_noise
//   encoder           | conditioned flag, label_probs
//   u64 forest count, then per forest: n_features, base_score, learning_rate,
//     u32 tree count, per tree u32 node count followed by flat arrays
//     feature[i32] threshold[f64] default_left[u8] left[i32] right[i32] value[f64]
//   u64 FNV-1a checksum of every preceding byte
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const ForestDiffusionModel& model);

// Throws FormatError on bad magic, version mismatch, truncation or checksum
// failure.
ForestDiffusionModel deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const std::string& path, const ForestDiffusionModel& model);
ForestDiffusionModel load_model(const std::string& path);

}  // namespace forestdiff
