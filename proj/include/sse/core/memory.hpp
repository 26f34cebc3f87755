#pragma once

#include <malloc.h>

namespace sse {

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training reallocates the same multi-megabyte activations every step, and
/// fresh pages cost more than the arithmetic done on them.
inline void retain_large_allocations() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

}  // namespace sse
