#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "nubble/grid.hpp"

namespace nubble {

using Tensor = std::variant<FeatureGrid, BinaryMask>;

/// Reads an NPY v1.0/v2.0 container.
///
/// Rank-3 little-endian '<f4' / '<f8' arrays become a FeatureGrid (widened to
/// double, normalized flag cleared, source id set to the file name). Rank-2
/// '|u1' / '|b1' arrays become a BinaryMask and must contain only 0 and 1.
Tensor read_tensor(const std::filesystem::path& path);

/// Same as read_tensor, but rejects anything that is not a grid / mask.
FeatureGrid read_grid(const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);

/// In-memory forms of the above; `name` only appears in error messages.
Tensor decode_npy(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");

/// NPY v1.0, C order: grids as '<f8' (H, W, C), masks as '|u1' (H, W).
std::vector<std::uint8_t> encode_npy(const FeatureGrid& grid);
std::vector<std::uint8_t> encode_npy(const BinaryMask& mask);

/// (H, W) '<f8' array, used to export similarity maps for plotting.
std::vector<std::uint8_t> encode_npy(const Eigen::VectorXd& values, Index height, Index width);

void write_tensor(const FeatureGrid& grid, const std::filesystem::path& path);
void write_tensor(const BinaryMask& mask, const std::filesystem::path& path);

/// Divides each patch by its L2 norm; all-zero patches stay all-zero.
FeatureGrid normalize_grid(const FeatureGrid& grid);

// Raw file helpers shared with the report writers.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace nubble
