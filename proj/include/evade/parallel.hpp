#pragma once

#include <exception>
#include <mutex>

namespace evade {

/// Carries the first exception thrown inside an OpenMP loop body out of the
/// parallel region; later iterations still run.
class ExceptionSlot {
 public:
  template <typename Fn>
  void run(Fn&& fn) noexcept {
    try {
      fn();
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

}  // namespace evade
