#pragma once

#include <stdlib.h>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace testutil {

// Scratch directory removed on scope exit.
struct TempDir {
  std::string path;

  TempDir() {
    char tmpl[] = "/tmp/csab-test-XXXXXX";
    const char* p = ::mkdtemp(tmpl);
    if (!p) throw std::runtime_error("mkdtemp failed");
    path = p;
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

  std::string file(const std::string& rel) const { return path + "/" + rel; }
};

}  // namespace testutil
