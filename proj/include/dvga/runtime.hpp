#pragma once

namespace dvga {

/// Keeps freed large blocks in the heap instead of returning them to the OS.
/// Training allocates many same-sized N x N temporaries per epoch; without
/// this each one is a fresh mmap whose pages fault in again. No-op outside glibc.
void tune_allocator();

}  // namespace dvga
