#include "ghyena/alloc.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "ghyena/error.hpp"

namespace ghyena {

namespace {
std::atomic<uint64_t> g_live{0};
std::atomic<uint64_t> g_peak{0};
std::atomic<uint64_t> g_budget{0};

void bump_peak(uint64_t live) noexcept {
  uint64_t prev = g_peak.load(std::memory_order_relaxed);
  while (prev < live && !g_peak.compare_exchange_weak(prev, live, std::memory_order_relaxed)) {
  }
}
}  // namespace

void* counted_alloc(size_t bytes) {
  if (bytes == 0) bytes = 1;
  uint64_t budget = g_budget.load(std::memory_order_relaxed);
  uint64_t live = g_live.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  if (budget != 0 && live > budget) {
    g_live.fetch_sub(bytes, std::memory_order_relaxed);
    fail(ErrCode::OutOfBudget, "allocation budget exceeded");
  }
  void* p = std::malloc(bytes);
  if (p == nullptr) {
    g_live.fetch_sub(bytes, std::memory_order_relaxed);
    fail(ErrCode::OutOfBudget, "allocation failed");
  }
  bump_peak(live);
  return p;
}

void counted_free(void* p, size_t bytes) noexcept {
  if (p == nullptr) return;
  if (bytes == 0) bytes = 1;
  std::free(p);
  g_live.fetch_sub(bytes, std::memory_order_relaxed);
}

AllocStats alloc_stats() noexcept {
  return {g_live.load(std::memory_order_relaxed), g_peak.load(std::memory_order_relaxed)};
}

void reset_alloc_peak() noexcept { g_peak.store(g_live.load(std::memory_order_relaxed), std::memory_order_relaxed); }

void set_alloc_budget(uint64_t bytes) noexcept { g_budget.store(bytes, std::memory_order_relaxed); }

CountedBuffer::CountedBuffer(size_t bytes) : p_(counted_alloc(bytes)), bytes_(bytes) {}

CountedBuffer::CountedBuffer(const CountedBuffer& other) : CountedBuffer() {
  if (other.p_ != nullptr) {
    p_ = counted_alloc(other.bytes_);
    bytes_ = other.bytes_;
    std::memcpy(p_, other.p_, bytes_);
  }
}

CountedBuffer::CountedBuffer(CountedBuffer&& other) noexcept : p_(other.p_), bytes_(other.bytes_) {
  other.p_ = nullptr;
  other.bytes_ = 0;
}

CountedBuffer& CountedBuffer::operator=(CountedBuffer other) noexcept {
  swap(other);
  return *this;
}

CountedBuffer::~CountedBuffer() { counted_free(p_, bytes_); }

void CountedBuffer::swap(CountedBuffer& other) noexcept {
  std::swap(p_, other.p_);
  std::swap(bytes_, other.bytes_);
}

}  // namespace ghyena
