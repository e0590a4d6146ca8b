#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace forge {

/// Thrown when a required input is absent; the CLI maps it to exit code 2.
class MissingInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it into place, so readers only
/// ever see the old or the complete new content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Metadata line written first in every JSONL artifact.
struct ArtifactHeader {
  std::string artifact;
  std::string config_digest;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

std::string header_line(const ArtifactHeader& header);
bool is_header_record(const nlohmann::json& record);

/// Calls fn(line_number, line) for every non-blank line that is not an
/// artifact header. Line numbers are 1-based physical line numbers.
void for_each_record_line(std::istream& in,
                          const std::function<void(std::size_t, std::string_view)>& fn);

void require_file(const std::filesystem::path& path, std::string_view what);

}  // namespace forge
