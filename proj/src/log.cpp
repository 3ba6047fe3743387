#include "mtgr/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace mtgr::log {

Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("LOG_LEVEL");
    const std::string v = env ? env : "";
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

void write(Level level, const std::string& message) {
  if (level > threshold()) return;
  static std::mutex mu;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace mtgr::log
