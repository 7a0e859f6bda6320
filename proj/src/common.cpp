#include "cpgan/common.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace cpgan {

namespace {

LogLevel g_level = [] {
  const char* env = std::getenv("CPGAN_LOG");
  if (env == nullptr) return LogLevel::kInfo;
  std::string v(env);
  if (v == "quiet") return LogLevel::kQuiet;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}();

std::mutex g_log_mutex;

void emit(const char* prefix, const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << prefix << msg << "\n";
}

}  // namespace

LogLevel log_level() { return g_level; }
void set_log_level(LogLevel level) { g_level = level; }

void log_info(const std::string& msg) {
  if (g_level >= LogLevel::kInfo) emit("[cpgan] ", msg);
}

void log_warn(const std::string& msg) {
  if (g_level >= LogLevel::kInfo) emit("[cpgan] warning: ", msg);
}

void log_debug(const std::string& msg) {
  if (g_level >= LogLevel::kDebug) emit("[cpgan] debug: ", msg);
}

}  // namespace cpgan
