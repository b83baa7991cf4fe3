#include "fbl/sphere.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace fbl {

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    long double acc = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
    return static_cast<double>(acc);
}

double squared_norm(std::span<const double> a) {
    long double acc = 0.0L;
    for (double x : a) acc += static_cast<long double>(x) * x;
    return static_cast<double>(acc);
}

void fill_sphere(std::span<double> out, double power, Rng& rng) {
    if (out.empty()) throw std::invalid_argument("fill_sphere: dimension must be >= 1");
    if (!(power > 0.0)) throw std::domain_error("fill_sphere: power must be positive");
    long double norm2 = 0.0L;
    do {
        norm2 = 0.0L;
        for (double& x : out) {
            x = rng.normal();
            norm2 += static_cast<long double>(x) * x;
        }
    } while (norm2 == 0.0L);
    const long double radius = std::sqrt(static_cast<long double>(out.size()) * power);
    const long double scale = radius / std::sqrt(norm2);
    for (double& x : out) x = static_cast<double>(x * scale);
}

SphericalCodeword sample_sphere(std::size_t n, double power, Rng& rng) {
    SphericalCodeword cw{std::vector<double>(n), power};
    fill_sphere(cw.symbols, power, rng);
    return cw;
}

namespace {

void check_blocks(std::span<const std::size_t> block_ends) {
    if (block_ends.empty()) throw std::invalid_argument("concatenated codeword needs at least one block");
    std::size_t previous = 0;
    for (std::size_t end : block_ends) {
        if (end <= previous) throw std::invalid_argument("concatenated codeword block of dimension 0");
        previous = end;
    }
}

void fill_concat(std::span<double> out, std::span<const std::size_t> block_ends, double power, Rng& rng) {
    std::size_t begin = 0;
    for (std::size_t end : block_ends) {
        fill_sphere(out.subspan(begin, end - begin), power, rng);
        begin = end;
    }
}

}  // namespace

ConcatCodeword sample_concat_sphere(std::span<const std::size_t> block_ends, double power, Rng& rng) {
    check_blocks(block_ends);
    ConcatCodeword cw{std::vector<double>(block_ends.back()), {block_ends.begin(), block_ends.end()}, power};
    fill_concat(cw.symbols, block_ends, power, rng);
    return cw;
}

double inner_product_q(const SphericalCodeword& x1, const SphericalCodeword& x2) {
    if (x1.length() != x2.length()) throw std::invalid_argument("inner_product_q: length mismatch");
    const double n = static_cast<double>(x1.length());
    return dot(x1.symbols, x2.symbols) / std::sqrt(n * x1.nominal_power * x2.nominal_power);
}

Codebook::Codebook(std::size_t messages, std::size_t length, double power)
    : messages_(messages), length_(length), power_(power), data_(messages * length) {}

Codebook Codebook::spherical(std::size_t messages, std::size_t length, double power, std::uint64_t key) {
    Codebook cb(messages, length, power);
    for (std::size_t m = 0; m < messages; ++m) {
        Rng rng(derive_key(key, m));
        fill_sphere(cb.row(m), power, rng);
    }
    return cb;
}

Codebook Codebook::concatenated(std::size_t messages, std::span<const std::size_t> block_ends, double power,
                                std::uint64_t key) {
    check_blocks(block_ends);
    Codebook cb(messages, block_ends.back(), power);
    for (std::size_t m = 0; m < messages; ++m) {
        Rng rng(derive_key(key, m));
        fill_concat(cb.row(m), block_ends, power, rng);
    }
    return cb;
}

namespace {

constexpr unsigned char kMagic[4] = {'F', 'B', 'L', 'C'};
constexpr std::size_t kHeaderBytes = 32;

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const unsigned char> in, std::size_t offset) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<unsigned char> encode_codebook(const Codebook& cb) {
    std::vector<unsigned char> out;
    out.reserve(kHeaderBytes + 8 * cb.data().size());
    for (unsigned char c : kMagic) out.push_back(c);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(kCodebookVersion >> (8 * i)));
    put_u64(out, cb.length());
    put_u64(out, cb.messages());
    put_u64(out, std::bit_cast<std::uint64_t>(cb.power()));
    for (double x : cb.data()) put_u64(out, std::bit_cast<std::uint64_t>(x));
    return out;
}

Codebook decode_codebook(std::span<const unsigned char> bytes) {
    if (bytes.size() < kHeaderBytes) throw CodebookFormatError("codebook: truncated header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CodebookFormatError("codebook: bad magic");
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    if (version != kCodebookVersion) throw CodebookFormatError("codebook: unsupported version " + std::to_string(version));
    const std::uint64_t n = get_u64(bytes, 8);
    const std::uint64_t m = get_u64(bytes, 16);
    const double power = std::bit_cast<double>(get_u64(bytes, 24));
    if (n != 0 && m > (bytes.size() - kHeaderBytes) / 8 / n) throw CodebookFormatError("codebook: truncated payload");
    if (bytes.size() != kHeaderBytes + 8 * n * m) throw CodebookFormatError("codebook: payload size mismatch");
    Codebook cb(m, n, power);
    auto data = cb.data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(get_u64(bytes, kHeaderBytes + 8 * i));
    return cb;
}

void write_codebook(const std::filesystem::path& path, const Codebook& cb) {
    const auto bytes = encode_codebook(cb);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

Codebook read_codebook(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_codebook(bytes);
}

}  // namespace fbl
