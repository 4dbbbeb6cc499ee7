#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "mambaest/tensor.hpp"

namespace mambaest {

/// Binary parameter checkpoint:
///   magic "MBNCKPT1", u32 format version, u32 header length, header text
///   (key=value lines), u32 record count, then per record
///   u32 name length, name, u32 rank, u64 extents..., float64 values.
/// All integers and floats are little-endian.
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
    std::map<std::string, std::string> header;
    ParameterSet params;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const std::map<std::string, std::string>& header);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parses `key=value` lines; lines without '=' are ignored.
std::map<std::string, std::string> parse_header_text(const std::string& text);
std::string format_header_text(const std::map<std::string, std::string>& header);

}  // namespace mambaest
