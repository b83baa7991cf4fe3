#pragma once

#include <cstdint>
#include <utility>

namespace fbl {

/// A probability in [0, 1]. Construction outside that range throws
/// std::domain_error.
class Probability {
public:
    Probability() = default;
    explicit Probability(double value);

    double value() const noexcept { return value_; }
    operator double() const noexcept { return value_; }

private:
    double value_ = 0.0;
};

/// Complementary standard normal CDF, Q(x) = P[N(0,1) > x].
double gaussian_q(double x);

/// Functional inverse of gaussian_q on (0, 1).
double gaussian_q_inv(double p);

/// Standard normal density.
double gaussian_pdf(double x) noexcept;

/// Regularized incomplete beta function I_x(a, b).
double regularized_beta(double a, double b, double x);

/// 1 - I_x(a, b), computed without cancellation.
double regularized_beta_complement(double a, double b, double x);

// Distribution of Q = sqrt(n) * (first coordinate of a uniform point on the
// unit sphere in R^n). Support is [-sqrt(n), sqrt(n)], density proportional
// to (1 - q^2/n)^((n-3)/2).
double sphere_coord_cdf(double q, std::int64_t n);
double sphere_coord_sf(double q, std::int64_t n);
double sphere_coord_pdf(double q, std::int64_t n);

struct Chi2TailBounds {
    double upper_dev_bound;  ///< bounds P[chi2_n - n >= 2 sqrt(n t) + 2t]
    double lower_dev_bound;  ///< bounds P[chi2_n - n <= -2 sqrt(n t)]
};

/// Laurent-Massart chi-squared deviation bounds; both equal exp(-t).
Chi2TailBounds chi2_tail_bounds(std::int64_t n, double t);

/// Deviation thresholds matching chi2_tail_bounds: (2 sqrt(n t) + 2t, 2 sqrt(n t)).
std::pair<double, double> chi2_deviation_thresholds(std::int64_t n, double t);

}  // namespace fbl
