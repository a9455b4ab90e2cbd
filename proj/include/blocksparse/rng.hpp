#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace blocksparse {

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based generator: output i of stream (seed, stream_id) is a pure
/// function of (seed, stream_id, i), so sweeps can hand each task its own
/// stream and reproduce serial results under any schedule. Satisfies
/// UniformRandomBitGenerator. Not safe to share across threads.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
        : seed_(seed),
          stream_id_(stream_id),
          key_(detail::mix64(seed ^ 0x6a09e667f3bcc909ULL)
               ^ detail::mix64(stream_id + 0x3c6ef372fe94f82bULL))
    {}

    // Stream for task (cell, trial) of a sweep seeded with master_seed.
    static RngStream for_task(std::uint64_t master_seed, std::uint64_t cell, std::uint64_t trial) noexcept
    {
        return {master_seed, (cell << 32) ^ trial};
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        ++counter_;
        return detail::mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    double normal() { return normal_(*this); }
    double uniform() { return std::uniform_real_distribution<double>{0.0, 1.0}(*this); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace blocksparse
