#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "bepa/encoder.hpp"

namespace bepa::checkpoint {

// Binary model checkpoint:
//   bytes 0..7   magic "BEPACKPT"
//   bytes 8..15  little-endian u64 header length
//   header       UTF-8 JSON: format_version, encoder config, training config,
//                and a parameter table (name, rows, cols, byte offset)
//   data         raw float64 arrays, column major, little endian, in
//                parameter-table order
inline constexpr char kMagic[8] = {'B', 'E', 'P', 'A', 'C', 'K', 'P', 'T'};
inline constexpr int kFormatVersion = 1;

struct Checkpoint {
  encoder::ModelParams params;
  nlohmann::json train_config;  // stored verbatim; may be null
};

void save(const std::string& path, const encoder::ModelParams& params,
          const nlohmann::json& train_config);

// Throws IoError on missing files, bad magic, truncation, or a parameter
// table that does not match the stored encoder config.
Checkpoint load(const std::string& path);

}  // namespace bepa::checkpoint
