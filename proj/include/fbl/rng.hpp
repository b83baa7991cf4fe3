#pragma once

// Counter-based random streams.
//
// Every stochastic routine in the library draws from a Philox4x32-10 stream
// identified by a 64-bit key. Keys for sub-streams (per trial, per shard, per
// codeword) are derived with a splitmix64 chain so that results never depend
// on scheduling or on the number of worker threads.
//
// Derived distributions (uniform, normal, gamma) are implemented here rather
// than taken from <random>, whose distribution algorithms are unspecified and
// differ between standard libraries.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace fbl {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Key of the sub-stream `index` below `parent`:
/// splitmix64(parent ^ splitmix64(index)).
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index) noexcept {
    return splitmix64(parent ^ splitmix64(index));
}

/// Chained derive_key over a path of indices.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept {
    for (auto index : path) parent = derive_key(parent, index);
    return parent;
}

/// Philox4x32 with 10 rounds. Satisfies UniformRandomBitGenerator with 64-bit
/// output; each counter block yields two outputs.
class Philox4x32 {
public:
    using result_type = std::uint64_t;

    explicit Philox4x32(std::uint64_t key = 0) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept;

    std::uint64_t key() const noexcept { return key_; }

    /// Raw block function, exposed for known-answer tests.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                              std::array<std::uint32_t, 2> key) noexcept;

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;
};

/// Random source with the derived variates used throughout the library.
class Rng {
public:
    explicit Rng(std::uint64_t key = 0) noexcept : engine_(key) {}

    std::uint64_t key() const noexcept { return engine_.key(); }
    std::uint64_t next_u64() noexcept { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    /// Uniform integer in [0, bound), bound > 0 (Lemire's method).
    std::uint64_t uniform_index(std::uint64_t bound) noexcept;
    /// Standard normal via Box-Muller.
    double normal() noexcept;
    /// Gamma(shape, 1) via Marsaglia-Tsang.
    double gamma(double shape) noexcept;
    /// Chi-squared with `dof` degrees of freedom.
    double chi_squared(double dof) noexcept { return 2.0 * gamma(0.5 * dof); }

private:
    Philox4x32 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fbl
