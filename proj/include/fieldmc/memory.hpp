#pragma once

#include <algorithm>
#include <cstdint>

namespace fieldmc {

// Byte meter for one worker's current task. Field constructors and solver
// workspaces report their footprint here so the scheduler can calibrate a
// bytes-per-cell constant from real allocations.
class alloc_meter {
 public:
  void add(std::int64_t bytes) {
    current_ += bytes;
    peak_ = std::max(peak_, current_);
  }
  void sub(std::int64_t bytes) { current_ -= bytes; }
  std::int64_t current_bytes() const { return current_; }
  std::int64_t peak_bytes() const { return peak_; }

 private:
  std::int64_t current_ = 0;
  std::int64_t peak_ = 0;
};

namespace detail {
inline thread_local alloc_meter* tl_meter = nullptr;
}

// Installs a meter for the current thread for the lifetime of the scope.
class meter_scope {
 public:
  explicit meter_scope(alloc_meter& m) : previous_(detail::tl_meter) {
    detail::tl_meter = &m;
  }
  ~meter_scope() { detail::tl_meter = previous_; }
  meter_scope(const meter_scope&) = delete;
  meter_scope& operator=(const meter_scope&) = delete;

 private:
  alloc_meter* previous_;
};

inline void meter_add(std::int64_t bytes) {
  if (auto* m = detail::tl_meter) m->add(bytes);
}
inline void meter_sub(std::int64_t bytes) {
  if (auto* m = detail::tl_meter) m->sub(bytes);
}

// RAII registration for a workspace of known size (Krylov bases etc).
class scoped_bytes {
 public:
  explicit scoped_bytes(std::int64_t bytes) : bytes_(bytes) { meter_add(bytes_); }
  ~scoped_bytes() { meter_sub(bytes_); }
  scoped_bytes(const scoped_bytes&) = delete;
  scoped_bytes& operator=(const scoped_bytes&) = delete;

 private:
  std::int64_t bytes_;
};

}  // namespace fieldmc
