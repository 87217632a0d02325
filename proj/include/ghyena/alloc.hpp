#pragma once

#include <cstddef>
#include <cstdint>

namespace ghyena {

// Accounting for tensor buffer allocations. The benchmark harness reads the
// high-water mark and can impose a byte budget to exercise the OOM path
// without exhausting real memory.
struct AllocStats {
  uint64_t live_bytes;
  uint64_t peak_bytes;
};

void* counted_alloc(size_t bytes);            // throws Error(OutOfBudget) when over budget
void counted_free(void* p, size_t bytes) noexcept;

AllocStats alloc_stats() noexcept;
void reset_alloc_peak() noexcept;             // peak := live
void set_alloc_budget(uint64_t bytes) noexcept;  // 0 disables the budget

// RAII byte buffer backed by the counted allocator.
class CountedBuffer {
 public:
  CountedBuffer() = default;
  explicit CountedBuffer(size_t bytes);
  CountedBuffer(const CountedBuffer& other);
  CountedBuffer(CountedBuffer&& other) noexcept;
  CountedBuffer& operator=(CountedBuffer other) noexcept;
  ~CountedBuffer();

  void* data() noexcept { return p_; }
  const void* data() const noexcept { return p_; }
  size_t size() const noexcept { return bytes_; }

  void swap(CountedBuffer& other) noexcept;

 private:
  void* p_ = nullptr;
  size_t bytes_ = 0;
};

}  // namespace ghyena
