#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace stm {

// Hex-encoded SHA-256 digest (OpenSSL).
std::string sha256_hex(const std::string& data);

std::string base64_encode(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Little-endian float64 buffer <-> base64, for checkpoint payloads.
std::string doubles_to_base64(std::span<const double> values);
std::vector<double> base64_to_doubles(const std::string& text);

}  // namespace stm
