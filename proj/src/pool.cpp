#include "lnca/pool.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lnca::inline LNCA_PRECISION {

ReplayPool::ReplayPool(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(derive_seed(seed, {0x706f6f6c})) {
    if (capacity == 0) throw std::invalid_argument("pool capacity must be positive");
}

namespace {

// Partial Fisher-Yates: first k of a uniform permutation of [0, n).
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
}

}  // namespace

std::vector<std::size_t> ReplayPool::sample(std::size_t count, std::uint64_t seed) const {
    if (entries_.empty()) throw std::logic_error("cannot sample from an empty pool");
    Rng rng(seed);
    return choose(entries_.size(), std::min(count, entries_.size()), rng);
}

std::vector<std::size_t> ReplayPool::store(std::vector<PoolEntry> entries) {
    if (entries.size() > capacity_)
        throw std::invalid_argument("storing " + std::to_string(entries.size()) + " states into a pool of capacity " +
                                    std::to_string(capacity_));
    std::vector<std::size_t> slots;
    const std::size_t room = capacity_ - entries_.size();
    const std::size_t appended = std::min(room, entries.size());
    for (std::size_t i = 0; i < appended; ++i) {
        slots.push_back(entries_.size());
        entries_.push_back(std::move(entries[i]));
    }
    if (appended < entries.size()) {
        // Evict distinct slots among those not written by this call.
        const std::size_t old = entries_.size() - appended;
        const auto victims = choose(old, entries.size() - appended, rng_);
        for (std::size_t i = 0; i < victims.size(); ++i) {
            entries_[victims[i]] = std::move(entries[appended + i]);
            slots.push_back(victims[i]);
        }
    }
    return slots;
}

void ReplayPool::replace(std::size_t slot, PoolEntry entry) { entries_.at(slot) = std::move(entry); }

std::vector<Tensor> unstack(const Tensor& batch) {
    const std::int64_t b = batch.dim(0);
    Shape one = batch.shape();
    one[0] = 1;
    const std::int64_t per = shape_numel(one);
    std::vector<Tensor> out;
    for (std::int64_t i = 0; i < b; ++i) {
        Tensor t(one);
        std::copy_n(batch.ptr() + i * per, per, t.ptr());
        out.push_back(std::move(t));
    }
    return out;
}

Tensor stack(const std::vector<Tensor>& items) {
    if (items.empty()) throw std::invalid_argument("stack: no items");
    Shape s = items[0].shape();
    const std::int64_t per = items[0].numel();
    s[0] = 0;
    for (const auto& t : items) {
        if (t.numel() != per) throw std::invalid_argument("stack: item sizes differ");
        s[0] += t.dim(0);
    }
    Tensor out(s);
    std::int64_t off = 0;
    for (const auto& t : items) {
        std::copy_n(t.ptr(), per, out.ptr() + off);
        off += per;
    }
    return out;
}

}  // namespace lnca
