#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace stshared {

/// Counter-based Philox4x32-10 generator.
///
/// A generator is identified by a 64-bit key (the seed) and a 64-bit stream
/// id; the remaining 64 bits of the counter advance with each block. Streams
/// with different ids never overlap, so parallel tasks derive independent,
/// reproducible streams from (master seed, task id).
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    /// Stream derived from a master seed and an ordered tuple of ids.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()();

    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    std::uint64_t seed() const { return key_; }
    std::uint64_t stream() const { return stream_; }

private:
    void refill();

    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int cursor_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer; used to combine ids into stream numbers.
std::uint64_t mix64(std::uint64_t x);

}  // namespace stshared
