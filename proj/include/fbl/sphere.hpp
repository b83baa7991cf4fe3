#pragma once

// Spherical codeword geometry and codebook storage.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "fbl/rng.hpp"

namespace fbl {

/// Codeword drawn uniformly from the sphere of radius sqrt(n P).
struct SphericalCodeword {
    std::vector<double> symbols;
    double nominal_power = 0.0;

    std::size_t length() const noexcept { return symbols.size(); }
};

/// Codeword of length n_K made of independent spherical blocks; block j covers
/// symbols [block_ends[j-1], block_ends[j]) with block_ends[-1] = 0, and has
/// squared norm (block length) * P.
struct ConcatCodeword {
    std::vector<double> symbols;
    std::vector<std::size_t> block_ends;
    double nominal_power = 0.0;
};

/// Writes a uniform point of the sphere of radius sqrt(out.size() * power)
/// into `out`. The norm is accumulated in extended precision.
void fill_sphere(std::span<double> out, double power, Rng& rng);

SphericalCodeword sample_sphere(std::size_t n, double power, Rng& rng);

/// Throws std::invalid_argument unless block_ends is strictly increasing with
/// a positive first entry.
ConcatCodeword sample_concat_sphere(std::span<const std::size_t> block_ends, double power, Rng& rng);

/// <x1, x2> / sqrt(n P1 P2) using the nominal powers.
double inner_product_q(const SphericalCodeword& x1, const SphericalCodeword& x2);

/// Extended-precision dot product of equal-length spans.
double dot(std::span<const double> a, std::span<const double> b);

/// Squared Euclidean norm, extended-precision accumulation.
double squared_norm(std::span<const double> a);

/// M codewords of length n stored row-major.
class Codebook {
public:
    Codebook() = default;
    Codebook(std::size_t messages, std::size_t length, double power);

    std::size_t messages() const noexcept { return messages_; }
    std::size_t length() const noexcept { return length_; }
    double power() const noexcept { return power_; }

    std::span<double> row(std::size_t m) { return {data_.data() + m * length_, length_}; }
    std::span<const double> row(std::size_t m) const { return {data_.data() + m * length_, length_}; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    /// Each row uniform on the sphere of radius sqrt(n P); row m is drawn from
    /// the stream derive_key(key, m).
    static Codebook spherical(std::size_t messages, std::size_t length, double power, std::uint64_t key);

    /// Each row a concatenated-sphere codeword with the given block ends; row m
    /// is drawn from derive_key(key, m).
    static Codebook concatenated(std::size_t messages, std::span<const std::size_t> block_ends, double power,
                                 std::uint64_t key);

    friend bool operator==(const Codebook&, const Codebook&) = default;

private:
    std::size_t messages_ = 0;
    std::size_t length_ = 0;
    double power_ = 0.0;
    std::vector<double> data_;
};

class CodebookFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary codebook layout, little-endian:
//   bytes 0..3   magic "FBLC"
//   bytes 4..7   uint32 version (1)
//   bytes 8..15  uint64 n (codeword length)
//   bytes 16..23 uint64 M (messages)
//   bytes 24..31 float64 P
//   then M*n float64 symbols, row-major.
inline constexpr std::uint32_t kCodebookVersion = 1;

std::vector<unsigned char> encode_codebook(const Codebook& cb);
Codebook decode_codebook(std::span<const unsigned char> bytes);
void write_codebook(const std::filesystem::path& path, const Codebook& cb);
Codebook read_codebook(const std::filesystem::path& path);

}  // namespace fbl
