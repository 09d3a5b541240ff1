#pragma once

#include <cstdint>

namespace cdavsr {

/// Counts multiply-accumulates issued by instrumented kernels (conv2d,
/// bilinear sampling, deformable convolution) on the current thread while
/// in scope. Scopes nest; every enclosing counter sees the inner counts.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t total() const noexcept { return total_; }

  static void add(std::uint64_t macs) noexcept;

 private:
  std::uint64_t total_ = 0;
  MacCounter* parent_;
};

}  // namespace cdavsr
