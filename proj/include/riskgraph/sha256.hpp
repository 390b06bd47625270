#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace riskgraph {

// Incremental SHA-256. Used for content-addressing artifacts (datasets,
// graphs, checkpoints, manifests) so reruns can be compared byte-for-byte.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  // Finalizes and returns lowercase hex digest. The object must not be
  // updated afterwards.
  std::string hex_digest();

 private:
  void process_block(const uint8_t* block);
  uint32_t state_[8];
  uint64_t total_len_ = 0;
  uint8_t buf_[64];
  size_t buf_len_ = 0;
  bool finalized_ = false;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

}  // namespace riskgraph
