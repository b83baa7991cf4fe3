#include <doctest.h>

#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "fbl/rng.hpp"

using namespace fbl;

// Known-answer vectors published with the Random123 library (kat_vectors,
// philox4x32_10).
TEST_CASE("Philox4x32-10 known answers") {
    using Block = std::array<std::uint32_t, 4>;
    CHECK(Philox4x32::block({0, 0, 0, 0}, {0, 0}) == Block{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox4x32::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          Block{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          Block{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("engine output is the block function over an incrementing counter") {
    const std::uint64_t key = 0x0123456789abcdefULL;
    Philox4x32 engine(key);
    const std::array<std::uint32_t, 2> k{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    for (std::uint32_t ctr = 0; ctr < 4; ++ctr) {
        const auto b = Philox4x32::block({ctr, 0, 0, 0}, k);
        CHECK(engine() == (static_cast<std::uint64_t>(b[0]) << 32 | b[1]));
        CHECK(engine() == (static_cast<std::uint64_t>(b[2]) << 32 | b[3]));
    }
}

TEST_CASE("splitmix64 reference outputs") {
    // First outputs of the reference splitmix64 generator seeded with 0 are
    // splitmix64(0), splitmix64(golden), ...
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(0x9E3779B97F4A7C15ULL) == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("derived keys are deterministic and distinct") {
    CHECK(derive_key(1, 2) == derive_key(1, 2));
    CHECK(derive_key(1, {2, 3}) == derive_key(derive_key(1, 2), 3));
    std::set<std::uint64_t> keys;
    for (std::uint64_t parent = 0; parent < 50; ++parent)
        for (std::uint64_t i = 0; i < 50; ++i) keys.insert(derive_key(parent, i));
    CHECK(keys.size() == 2500);
}

TEST_CASE("identical keys give identical variate streams") {
    Rng a(99), b(99), c(100);
    bool differs = false;
    for (int i = 0; i < 1000; ++i) {
        const double x = a.normal();
        CHECK(x == b.normal());
        differs = differs || x != c.normal();
    }
    CHECK(differs);
}

TEST_CASE("uniform variates lie in the open unit interval with the right moments") {
    Rng rng(5);
    const int count = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < count; ++i) {
        const double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    CHECK(sum / count == doctest::Approx(0.5).epsilon(0.003));
    CHECK(sum2 / count == doctest::Approx(1.0 / 3.0).epsilon(0.003));
}

TEST_CASE("uniform_index is unbiased over small ranges") {
    Rng rng(11);
    const std::uint64_t bound = 7;
    std::vector<int> counts(bound, 0);
    const int draws = 700000;
    for (int i = 0; i < draws; ++i) {
        const auto v = rng.uniform_index(bound);
        REQUIRE(v < bound);
        ++counts[v];
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - draws / 7.0) * (c - draws / 7.0) / (draws / 7.0);
    CHECK(chi2 < 16.81);  // chi-squared, 6 dof, 1% level
    CHECK(rng.uniform_index(1) == 0);
}

TEST_CASE("normal variates have standard moments") {
    Rng rng(3);
    const int count = 1000000;
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
    for (int i = 0; i < count; ++i) {
        const double z = rng.normal();
        m1 += z;
        m2 += z * z;
        m3 += z * z * z;
        m4 += z * z * z * z;
    }
    CHECK(std::abs(m1 / count) < 0.005);
    CHECK(std::abs(m2 / count - 1.0) < 0.006);
    CHECK(std::abs(m3 / count) < 0.02);
    CHECK(std::abs(m4 / count - 3.0) < 0.05);
}

TEST_CASE("gamma and chi-squared variates have the right mean and variance") {
    for (double shape : {0.3, 0.5, 1.0, 3.7, 40.0}) {
        Rng rng(derive_key(17, static_cast<std::uint64_t>(shape * 10)));
        const int count = 400000;
        double sum = 0, sum2 = 0;
        for (int i = 0; i < count; ++i) {
            const double g = rng.gamma(shape);
            REQUIRE(g >= 0.0);
            sum += g;
            sum2 += g * g;
        }
        const double mean = sum / count;
        const double var = sum2 / count - mean * mean;
        // 5 standard errors of the mean; variance within 5%
        CHECK(std::abs(mean - shape) < 5.0 * std::sqrt(shape / count));
        CHECK(var == doctest::Approx(shape).epsilon(0.05));
    }
    Rng rng(8);
    double sum = 0;
    for (int i = 0; i < 200000; ++i) sum += rng.chi_squared(5.0);
    CHECK(sum / 200000 == doctest::Approx(5.0).epsilon(0.01));
}
