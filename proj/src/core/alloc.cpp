#include "mga/core/alloc.hpp"

#include <cstddef>  // defines __GLIBC__ via features.h

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mga::nn {

void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    // glibc's cap on 64-bit. A fixed threshold stops the dynamic one from
    // handing every large tensor back to the kernel.
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

namespace {
// Runs before main in any binary that links this object.
const bool g_tuned = (tune_allocator(), true);
}  // namespace

}  // namespace mga::nn
