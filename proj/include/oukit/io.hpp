#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "oukit/ou_core.hpp"

namespace oukit::io {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// Strict parse of a whole field; throws ParseError tagged with `line`.
double parse_double(std::string_view field, std::size_t line);
std::size_t parse_size(std::string_view field, std::size_t line);

std::vector<std::string_view> split_csv_line(std::string_view line);

/// Writes `contents` to a sibling temp file and renames it over `path`,
/// so readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// CSV with header `t,path_0,...,path_{P-1}`, one row per grid point.
std::string pathset_to_csv(const PathSet& paths);
void write_pathset_csv(const PathSet& paths, const std::filesystem::path& path);

/// Inverse of pathset_to_csv. dt is taken from the first time step; the seed
/// is not stored in the file and is set to `seed`.
PathSet pathset_from_csv(std::string_view text, std::uint64_t seed = 0);
PathSet read_pathset_csv(const std::filesystem::path& path, std::uint64_t seed = 0);

}  // namespace oukit::io
