#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "imedbot/codec.hpp"

namespace support {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("imedbot_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  static int& counter() { static int c = 0; return c; }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path demo_dir() { return IMEDBOT_DEMO_DIR; }
inline std::filesystem::path data_dir() { return IMEDBOT_DATA_DIR; }

// Written next to the demo models when they are trained.
inline imedbot::codec::Json golden() {
  return imedbot::codec::Json::parse(slurp(demo_dir() / "golden.json"));
}

inline std::map<std::string, std::string> golden_answers() {
  return golden().at("answers").get<std::map<std::string, std::string>>();
}

}  // namespace support
