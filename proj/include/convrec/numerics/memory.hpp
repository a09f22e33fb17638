#pragma once

#include <atomic>
#include <cstddef>
#include <limits>
#include <new>
#include <vector>

namespace convrec::numerics {

// Process-wide accounting of every buffer allocated through TrackingAllocator.
// The bench harness reads the high-water mark instead of process RSS so the
// numbers are independent of the system allocator.
class MemoryTracker {
 public:
  static MemoryTracker& instance() {
    static MemoryTracker tracker;
    return tracker;
  }

  void on_allocate(std::size_t bytes) noexcept {
    const std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    std::size_t peak = peak_.load(std::memory_order_relaxed);
    while (now > peak && !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
  }

  void on_deallocate(std::size_t bytes) noexcept {
    current_.fetch_sub(bytes, std::memory_order_relaxed);
  }

  std::size_t current_bytes() const noexcept { return current_.load(std::memory_order_relaxed); }
  std::size_t peak_bytes() const noexcept { return peak_.load(std::memory_order_relaxed); }

  // Restart high-water tracking from the current live total.
  void reset_peak() noexcept { peak_.store(current_bytes(), std::memory_order_relaxed); }

 private:
  MemoryTracker() = default;

  std::atomic<std::size_t> current_{0};
  std::atomic<std::size_t> peak_{0};
};

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    if (n > std::numeric_limits<std::size_t>::max() / sizeof(T)) throw std::bad_array_new_length();
    T* p = static_cast<T*>(::operator new(n * sizeof(T)));
    MemoryTracker::instance().on_allocate(n * sizeof(T));
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    MemoryTracker::instance().on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, TrackingAllocator<double>>;

// Threads the numerics layer is allowed to use. Kernels are single-threaded;
// the value is consulted by callers that fan work out (evaluation) and by the
// bench harness, which refuses to time anything when it is above one.
inline std::atomic<int>& execution_threads_setting() {
  static std::atomic<int> threads{1};
  return threads;
}

inline int execution_threads() { return execution_threads_setting().load(); }
inline void set_execution_threads(int n) { execution_threads_setting().store(n < 1 ? 1 : n); }

}  // namespace convrec::numerics
