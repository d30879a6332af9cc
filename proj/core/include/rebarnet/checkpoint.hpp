#pragma once

#include <string>

#include "rebarnet/netdef.hpp"

namespace rebarnet {

// Versioned binary checkpoint: magic "RBSC", u32 version, u64 header
// length, UTF-8 JSON header (network spec, dtype, tensor manifest with
// shapes/roles/byte offsets), then raw little-endian float64 payloads in
// manifest order. Round-trips bit-exactly; see docs/formats.md.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace rebarnet
