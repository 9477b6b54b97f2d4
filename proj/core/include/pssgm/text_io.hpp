#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "pssgm/samples.hpp"

namespace pssgm {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
/// Strict parse of the whole token; throws schema_violation on junk.
double parse_double(std::string_view token);
std::size_t parse_size(std::string_view token);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: to path + ".tmp", then rename.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Comma-separated, header row "x0,x1,...", one sample per row.
std::string samples_to_csv(const SampleMatrix& samples);
SampleMatrix samples_from_csv(std::string_view text);
void write_samples_csv(const std::filesystem::path& path, const SampleMatrix& samples);
SampleMatrix read_samples_csv(const std::filesystem::path& path);

/// Sidecar path convention: "<file>.meta.json".
std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace pssgm
