#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mgua {

// Whole-file helpers.
std::vector<uint8_t> read_file_bytes(const std::string& path);
std::string read_file_text(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes);
void write_file_text(const std::string& path, const std::string& text);

// Flat little-endian binary tensor; dtype "f64" or "f32".
void write_tensor_binary(const std::string& path, std::span<const double> data,
                         const std::string& dtype);
std::vector<double> read_tensor_binary(const std::string& path, const std::string& dtype);

// FNV-1a 64-bit, rendered as a fixed-width hex string. Used for provenance
// hashes in run reports.
uint64_t fnv1a64(std::span<const uint8_t> bytes);
std::string fnv1a64_hex(const std::string& text);

}  // namespace mgua
