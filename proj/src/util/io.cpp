#include "forge/util/io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

namespace forge {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string header_line(const ArtifactHeader& header) {
  nlohmann::json h = {{"artifact", header.artifact},
                      {"config_digest", header.config_digest},
                      {"format_version", 1},
                      {"seed", header.seed}};
  for (auto& [k, v] : header.extra.items()) h[k] = v;
  return nlohmann::json{{"_header", h}}.dump() + "\n";
}

bool is_header_record(const nlohmann::json& record) {
  return record.is_object() && record.contains("_header");
}

void for_each_record_line(std::istream& in,
                          const std::function<void(std::size_t, std::string_view)>& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (number == 1 && line.rfind("{\"_header\"", 0) == 0) continue;
    fn(number, line);
  }
}

void require_file(const std::filesystem::path& path, std::string_view what) {
  if (!std::filesystem::is_regular_file(path)) {
    throw MissingInputError(std::string(what) + " not found: " + path.string());
  }
}

}  // namespace forge
