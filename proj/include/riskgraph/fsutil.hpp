#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace riskgraph {

void ensure_dir(const std::string& dir);
bool file_exists(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t len);
std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace riskgraph
