#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace texgen {

using LogSink = std::function<void(const std::string&)>;

namespace detail {
struct LogState {
  std::mutex mutex;
  LogSink sink = [](const std::string& msg) { std::clog << "[texgen] warning: " << msg << '\n'; };
};
inline LogState& log_state() {
  static LogState state;
  return state;
}
}  // namespace detail

/// Replaces the warning sink; returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  return std::exchange(s.sink, std::move(sink));
}

inline void log_warning(const std::string& msg) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  if (s.sink) s.sink(msg);
}

}  // namespace texgen
