#pragma once

namespace feed {

// Keeps large, short-lived activation buffers on the heap instead of fresh
// mmap pages each step. No-op outside glibc.
void tune_allocator();

}  // namespace feed
