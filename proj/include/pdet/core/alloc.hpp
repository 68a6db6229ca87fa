#pragma once

namespace pdet {

// Keeps large tensor buffers on the heap instead of fresh mmap pages; the
// autodiff tape allocates and frees many 100 KB-scale buffers per step.
// No-op outside glibc. Call once at startup.
void tune_allocator();

}  // namespace pdet
