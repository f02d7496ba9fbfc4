#pragma once

#include <cstdint>
#include <string>

namespace rtpower {

// Shortest decimal representation that parses back to the identical double.
std::string format_double(double value);

// Whole-file read; throws IoError with the path on failure.
std::string read_file(const std::string& path);

// Write-then-rename so readers never observe a partial file. Throws IoError.
void atomic_write_file(const std::string& path, const std::string& content);

// FNV-1a 64-bit digest as 16 hex characters, for input provenance in reports.
std::string fnv1a64_hex(const std::string& bytes);

} // namespace rtpower
