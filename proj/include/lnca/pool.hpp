#pragma once

#include <cstdint>
#include <vector>

#include "lnca/rng.hpp"
#include "lnca/tensor.hpp"

namespace lnca::inline LNCA_PRECISION {

/// One pooled cell state with the ground-truth sample it belongs to. `context`
/// holds what the readout needs besides the state (the AE skip tensor).
struct PoolEntry {
    Tensor cells;    // [1,H,W,C]
    Tensor context;  // may be empty
    std::int64_t step = 0;
    std::int64_t target_id = -1;
};

/// Replay buffer for pool sampling. Odd phases store freshly seeded states
/// after their update; even phases sample stored states and write the
/// updated states back into the same slots.
class ReplayPool {
   public:
    explicit ReplayPool(std::size_t capacity = 1024, std::uint64_t seed = 0);

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return entries_.empty(); }
    const PoolEntry& at(std::size_t slot) const { return entries_.at(slot); }

    /// min(count, size()) distinct slots chosen uniformly. Throws
    /// std::logic_error on an empty pool.
    std::vector<std::size_t> sample(std::size_t count, std::uint64_t seed) const;
    /// Appends while below capacity; beyond that overwrites seeded-random
    /// distinct slots. Returns the slots written.
    std::vector<std::size_t> store(std::vector<PoolEntry> entries);
    void replace(std::size_t slot, PoolEntry entry);

   private:
    std::size_t capacity_;
    std::vector<PoolEntry> entries_;
    Rng rng_;
};

/// Splits a batch tensor [B,...] into B single-sample tensors and back.
std::vector<Tensor> unstack(const Tensor& batch);
Tensor stack(const std::vector<Tensor>& items);

}  // namespace lnca
