#pragma once

// Binary episode ("GTEP") and checkpoint ("GTWT") formats, graymap image
// dumps and key=value config files. All integers are little-endian with
// fixed widths; floats are IEEE-754 binary64, little-endian.
//
// Episode, version 1:
//   char[4]  magic "GTEP"
//   u32      version
//   u8       topology (0 chain, 1 ring)
//   u8[3]    reserved, zero
//   u32      task id
//   u32      unit count N
//   u32      height H
//   u32      width W
//   u32      step count S
//   f64      link length
//   u8[H*W]  goal image, row-major, round(255 * intensity)
//   f64[2N]  goal unit positions (x0, y0, x1, y1, ...)
//   S times:
//     u8[H*W]  current image
//     f64[2N]  current unit positions
//     i32[4]   oracle action: pick row, pick col, place row, place col
//   u8[H*W]  final image
//   f64[2N]  final unit positions
//
// Checkpoint, version 1:
//   char[4]  magic "GTWT"
//   u32      version
//   i32[11]  height, width, keypoints, crop, feature_channels, fcn_hidden,
//            fcn_layers, kernel, dilation_growth, gcn_hidden, gcn_out
//   f64[3]   mask_sigma, mask_truncate, foreground_threshold
//   u8       align_goal_keypoints
//   u8[3]    reserved, zero
//   u32      array count A
//   A times:
//     u32      rank R
//     u32[R]   dimensions
//     f64[...] values, row-major
//   Arrays appear in parameter_list() order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ropegraph/dataset.hpp"
#include "ropegraph/model.hpp"

namespace ropegraph {

inline constexpr std::uint32_t kEpisodeVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_episode(const Episode& episode);
Episode decode_episode(const std::string& bytes);
void write_episode(const Episode& episode, const std::filesystem::path& path);
Episode read_episode(const std::filesystem::path& path);

std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::string& bytes);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

// 8-bit quantization used for stored images.
std::uint8_t quantize(double intensity);
double dequantize(std::uint8_t value);

// Binary PGM (P5), 8-bit.
void write_pgm(const Image& image, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// Plain-text key=value lines; '#' starts a comment, blank lines ignored.
// Keys outside `allowed` are rejected with ConfigError.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::set<std::string>& allowed);

}  // namespace ropegraph
