#pragma once

namespace mga::nn {

// Keeps large tensor buffers on the heap instead of mmap/munmap per
// allocation (glibc only; a no-op elsewhere). Safe to call repeatedly.
void tune_allocator();

}  // namespace mga::nn
