#pragma once

// Checkpoint layout (version 1):
//
//   CFIECKPT 1\n
//   header <nbytes>\n<nbytes of UTF-8 JSON>\n
//   params <count>\n
//   then per parameter: <name>\t<rows>\t<cols>\n followed by rows*cols
//   IEEE-754 doubles, little-endian, and a trailing \n.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cfie/numerics.hpp"

namespace cfie::num {

inline constexpr const char* kCheckpointMagic = "CFIECKPT";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointData {
  std::string header;
  std::vector<std::pair<std::string, Array>> params;
};

void write_checkpoint(std::ostream& out, const std::string& header, const ParameterSet& params);
CheckpointData read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::string& header,
                     const ParameterSet& params);
CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Copies values into an existing set; names and shapes must match exactly.
void assign_parameters(ParameterSet& params, const CheckpointData& data);

}  // namespace cfie::num
