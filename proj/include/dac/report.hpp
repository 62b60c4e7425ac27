#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dac {

/// Lowercase hex SHA-256 of a file's bytes.
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

/// Shortest round-trip-safe text for a double ("%.17g"), used in every CSV.
[[nodiscard]] std::string format_double(double v);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// {"file": name, "sha256": hash} entries for files relative to `dir`.
[[nodiscard]] std::string manifest_files_json(const std::filesystem::path& dir,
                                              const std::vector<std::string>& names);

}  // namespace dac
