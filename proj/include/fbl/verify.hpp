#pragma once

// Self-check suites run by `fbl-gausac verify`: concentration and
// distance bounds against simulation or quadrature, sampler goodness of fit,
// and decoder agreement with brute-force likelihood evaluation.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace fbl {

struct CheckResult {
    std::string name;
    bool passed = false;
    double statistic = 0.0;  ///< observed quantity
    double limit = 0.0;      ///< what it was compared against
    std::uint64_t samples = 0;
    std::string detail;
};

void to_json(nlohmann::json& j, const CheckResult& r);

/// Upper and lower chi-squared tail frequencies against e^{-t} + 3 sigma.
std::vector<CheckResult> check_chi2_tails(std::int64_t n, double t, std::uint64_t samples, std::uint64_t seed,
                                          unsigned workers = 1);

/// Kolmogorov-Smirnov test of the first coordinate of sqrt(n)-sphere points
/// against the sphere-coordinate CDF at the 1% level.
CheckResult check_sphere_ks(std::int64_t n, std::uint64_t samples, std::uint64_t seed, unsigned workers = 1);

/// Mean within 0.01 of 0 and variance within 0.05 of 1 for the normalized
/// inner product of independent spherical codewords.
CheckResult check_inner_product_moments(std::int64_t n, std::uint64_t samples, std::uint64_t seed,
                                        unsigned workers = 1);

/// Largest absolute empirical correlation between the pairwise normalized
/// inner products of `users` independent codewords, required below 0.02.
CheckResult check_pairwise_inner_products(int users, std::int64_t n, std::uint64_t samples, std::uint64_t seed,
                                          unsigned workers = 1);

/// tv_gaussian_bound against quadrature TV on random 1-D Gaussian pairs.
CheckResult check_gaussian_tv(int pairs, std::uint64_t seed);

/// stam_bound(n, 1) against quadrature TV between the sphere-coordinate law
/// and N(0, 1), and against 8/n.
CheckResult check_sphere_tv(std::int64_t n);

/// MAC decoder against brute-force Gaussian log-likelihood, K = 2.
CheckResult check_mac_decoder(int instances, std::int64_t n, std::uint64_t messages, std::uint64_t seed);

/// RAC list decoder against brute-force log-likelihood over increasing lists.
CheckResult check_rac_decoder(int instances, std::int64_t n, std::uint64_t messages, int k, std::uint64_t seed);

/// General dispersion matrix against the explicit two-user entries.
CheckResult check_dispersion_consistency(int pairs, std::uint64_t seed);

/// Quadrature TV distance 0.5 * integral |f - g| of two 1-D normals.
double normal_tv_quadrature(double mu1, double var1, double mu2, double var2);

/// Quadrature TV distance between the sphere-coordinate law and N(0, 1).
double sphere_coord_tv_quadrature(std::int64_t n);

struct VerifyOptions {
    std::uint64_t samples = 100000;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

std::vector<CheckResult> run_verify_suite(const VerifyOptions& options);

}  // namespace fbl
