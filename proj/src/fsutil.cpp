#include "riskgraph/fsutil.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace riskgraph {

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

void write_file_bytes(const std::string& path, const void* data, size_t len) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(static_cast<const char*>(data), std::streamsize(len));
  if (!out) throw std::runtime_error("short write to " + path);
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> buf(size_t(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (!in) throw std::runtime_error("short read from " + path);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

std::string read_text_file(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace riskgraph
