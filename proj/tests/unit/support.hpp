#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "forge/corpus/corpus.hpp"
#include "forge/util/io.hpp"

namespace forge::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(FORGE_FIXTURES) / name;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("forge-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Golden files are produced once by the implementation and frozen; set
/// FORGE_REGEN_GOLDEN=1 to rewrite them.
inline void check_golden(const std::string& name, const std::string& actual) {
  const auto path = fixture("golden") / name;
  if (std::getenv("FORGE_REGEN_GOLDEN")) {
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, actual);
    MESSAGE("rewrote golden " << name);
    return;
  }
  REQUIRE_MESSAGE(std::filesystem::exists(path), "missing golden file " << path);
  CHECK(read_file(path) == actual);
}

inline corpus::ItemDoc item(std::string id,
                            std::vector<std::pair<std::string, std::string>> fields) {
  return {std::move(id), std::move(fields)};
}

}  // namespace forge::test
