#pragma once

#include <functional>
#include <iostream>
#include <string>
#include <utility>

namespace csab {

// Minimal log sink. Warnings go to stderr by default; tests can capture them.
inline std::function<void(const std::string&)>& log_sink() {
  static std::function<void(const std::string&)> sink =
      [](const std::string& msg) { std::cerr << "[csab] " << msg << "\n"; };
  return sink;
}

inline void set_log_sink(std::function<void(const std::string&)> sink) {
  log_sink() = std::move(sink);
}

inline void log_warn(const std::string& msg) { log_sink()(msg); }
inline void log_info(const std::string& msg) { log_sink()(msg); }

}  // namespace csab
