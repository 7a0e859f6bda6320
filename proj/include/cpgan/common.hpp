#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cpgan {

using index_t = std::int64_t;

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level();
void set_log_level(LogLevel level);
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_debug(const std::string& msg);

namespace detail {

inline void str_append(std::ostringstream&) {}

template <typename A, typename... Rest>
void str_append(std::ostringstream& os, A&& a, Rest&&... rest) {
  os << std::forward<A>(a);
  str_append(os, std::forward<Rest>(rest)...);
}

}  // namespace detail

template <typename... Args>
std::string str_cat(Args&&... args) {
  std::ostringstream os;
  detail::str_append(os, std::forward<Args>(args)...);
  return os.str();
}

template <typename... Args>
void log_info(Args&&... args) {
  if (log_level() >= LogLevel::kInfo)
    log_info(str_cat(std::forward<Args>(args)...));
}

template <typename... Args>
void log_warn(Args&&... args) {
  log_warn(str_cat(std::forward<Args>(args)...));
}

template <typename... Args>
void log_debug(Args&&... args) {
  if (log_level() >= LogLevel::kDebug)
    log_debug(str_cat(std::forward<Args>(args)...));
}

template <typename... Args>
[[noreturn]] void fail_invalid(Args&&... args) {
  throw std::invalid_argument(str_cat(std::forward<Args>(args)...));
}

template <typename... Args>
[[noreturn]] void fail_runtime(Args&&... args) {
  throw std::runtime_error(str_cat(std::forward<Args>(args)...));
}

template <typename... Args>
void require(bool cond, Args&&... args) {
  if (!cond) fail_invalid(std::forward<Args>(args)...);
}

}  // namespace cpgan
