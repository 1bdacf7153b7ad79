#pragma once

#include <atomic>
#include <cstdint>

namespace qfilt {

/// Process-wide counters for numerical fallbacks. Filters never print from
/// inner loops; callers (CLI, bench) read and report these.
struct NumericWarnings {
  std::atomic<std::uint64_t> regularized_inverse{0};
  std::atomic<std::uint64_t> clamped_sqrt{0};
  std::atomic<std::uint64_t> zero_weight_fallback{0};
  std::atomic<std::uint64_t> rejection_cap{0};

  void reset() {
    regularized_inverse = 0;
    clamped_sqrt = 0;
    zero_weight_fallback = 0;
    rejection_cap = 0;
  }
};

NumericWarnings& numeric_warnings();

}  // namespace qfilt
