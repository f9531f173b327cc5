#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace texgen {

namespace detail {
inline std::atomic<int>& thread_count_setting() {
  static std::atomic<int> count{0};
  return count;
}
}  // namespace detail

/// Number of worker threads used by band-parallel loops. 0 = hardware default.
inline void set_thread_count(int count) {
  detail::thread_count_setting().store(std::max(0, count));
}

inline int thread_count() {
  int n = detail::thread_count_setting().load();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Splits [0, rows) into contiguous bands and runs fn(begin, end) on each.
/// Bands own their rows exclusively, so results do not depend on the band
/// count as long as fn only writes rows inside its band.
template <typename Fn>
void parallel_bands(int rows, Fn&& fn, int bands = 0) {
  if (rows <= 0) return;
  if (bands <= 0) bands = thread_count();
  bands = std::clamp(bands, 1, rows);
  if (bands == 1) {
    fn(0, rows);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(bands);
  workers.reserve(bands);
  for (int b = 0; b < bands; ++b) {
    int begin = static_cast<int>(static_cast<long long>(rows) * b / bands);
    int end = static_cast<int>(static_cast<long long>(rows) * (b + 1) / bands);
    workers.emplace_back([&, b, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace texgen
