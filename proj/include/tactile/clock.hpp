#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <thread>

namespace tactile {

/// Monotonic milliseconds since construction, backed by steady_clock.
class SteadyClock {
 public:
  SteadyClock() : origin_(std::chrono::steady_clock::now()) {}

  double now_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - origin_)
        .count();
  }
  void sleep_until_ms(double t_ms) const {
    std::this_thread::sleep_until(
        origin_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                      std::chrono::duration<double, std::milli>(t_ms)));
  }

 private:
  std::chrono::steady_clock::time_point origin_;
};

/// Wall-clock epoch milliseconds; used for timestamps that leave the process.
struct SystemClock {
  double now_ms() const {
    return static_cast<double>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                   std::chrono::system_clock::now().time_since_epoch())
                                   .count());
  }
  void sleep_until_ms(double t_ms) const {
    const double dt = t_ms - now_ms();
    if (dt > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(dt));
  }
};

/// Virtual time: sleeping advances the clock instantly.
class ManualClock {
 public:
  explicit ManualClock(double start_ms = 0.0) : now_(start_ms) {}
  ManualClock(const ManualClock& other) : now_(other.now_ms()) {}

  double now_ms() const { return now_.load(); }
  void sleep_until_ms(double t_ms) {
    double cur = now_.load();
    while (t_ms > cur && !now_.compare_exchange_weak(cur, t_ms)) {
    }
  }
  void advance(double dt_ms) { sleep_until_ms(now_ms() + dt_ms); }

 private:
  std::atomic<double> now_;
};

}  // namespace tactile
