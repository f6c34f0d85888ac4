#pragma once

#if defined(__GLIBC__) || defined(__has_include)
#if defined(__GLIBC__) || __has_include(<malloc.h>)
#include <malloc.h>
#define GHOSTGRAD_HAVE_MALLOPT 1
#endif
#endif

namespace ghostgrad {

// Training rebuilds multi-megabyte tapes every step. With default glibc
// thresholds those blocks are mmap'd and returned to the kernel on free, so
// each step pays the page faults again. Raising the thresholds keeps the
// blocks in the arena. Call once per process before heavy work.
inline void tune_allocator() {
#ifdef GHOSTGRAD_HAVE_MALLOPT
#ifdef M_MMAP_THRESHOLD
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
#endif
}

}  // namespace ghostgrad
