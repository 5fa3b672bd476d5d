#pragma once

#include <cstdint>
#include <string>

namespace phm::io {

// Content hashing for run manifests and idempotence checks.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::string& path);

// Cheap stable hash for column headers and similar short identity strings.
std::uint64_t fnv1a64(const std::string& s);

}  // namespace phm::io
