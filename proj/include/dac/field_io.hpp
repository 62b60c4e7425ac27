#pragma once

#include <filesystem>

#include "dac/spatial.hpp"

namespace dac {

/*!
 * DACF v1 field file, all little-endian:
 *
 *   "DACF" | u32 version = 1 | u32 nx | u32 ny | f64 spacing | d x f64 (row-major)
 */
void write_field(const Field& field, const std::filesystem::path& path);
[[nodiscard]] Field read_field(const std::filesystem::path& path);

}  // namespace dac
