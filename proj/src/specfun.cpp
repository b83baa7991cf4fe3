#include "fbl/specfun.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fbl {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Acklam's rational approximation to the standard normal quantile, used as a
// starting point for refinement.
double normal_quantile_seed(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 20000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("regularized_beta: continued fraction did not converge");
}

// x^a (1-x)^b / (a B(a, b))
double beta_prefactor(double a, double b, double x) {
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    return std::exp(log_front) / a;
}

void check_beta_args(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("regularized_beta: a, b must be positive");
    if (std::isnan(x)) throw std::domain_error("regularized_beta: NaN argument");
}

void check_dimension(std::int64_t n) {
    if (n < 2) throw std::domain_error("sphere_coord: dimension must be >= 2, got " + std::to_string(n));
}

}  // namespace

Probability::Probability(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0))
        throw std::domain_error("probability out of range: " + std::to_string(value));
}

double gaussian_q(double x) {
    if (std::isnan(x)) throw std::domain_error("gaussian_q: NaN argument");
    return 0.5 * std::erfc(x * kInvSqrt2);
}

double gaussian_pdf(double x) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double gaussian_q_inv(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("gaussian_q_inv: p must lie in (0, 1)");
    if (p == 0.5) return 0.0;
    // Solve Q(x) = p on the side where Q is small to keep relative accuracy.
    const bool upper = p < 0.5;
    const double tail = upper ? p : 1.0 - p;
    double x = -normal_quantile_seed(tail);  // x > 0 with Q(x) ~= tail
    for (int i = 0; i < 3; ++i) {
        const double e = gaussian_q(x) - tail;
        const double u = -e / gaussian_pdf(x);  // Newton direction for Q(x) - tail
        x = x - u / (1.0 + 0.5 * x * u);        // Halley correction
    }
    return upper ? x : -x;
}

double regularized_beta(double a, double b, double x) {
    check_beta_args(a, b, x);
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    if (x < (a + 1.0) / (a + b + 2.0)) return beta_prefactor(a, b, x) * beta_continued_fraction(a, b, x);
    return 1.0 - beta_prefactor(b, a, 1.0 - x) * beta_continued_fraction(b, a, 1.0 - x);
}

double regularized_beta_complement(double a, double b, double x) {
    check_beta_args(a, b, x);
    if (x <= 0.0) return 1.0;
    if (x >= 1.0) return 0.0;
    return regularized_beta(b, a, 1.0 - x);
}

// (1 + q/sqrt(n)) / 2 ~ Beta((n-1)/2, (n-1)/2)
double sphere_coord_cdf(double q, std::int64_t n) {
    check_dimension(n);
    if (std::isnan(q)) throw std::domain_error("sphere_coord_cdf: NaN argument");
    const double root_n = std::sqrt(static_cast<double>(n));
    if (q <= -root_n) return 0.0;
    if (q >= root_n) return 1.0;
    const double shape = 0.5 * static_cast<double>(n - 1);
    if (q > 0.0) return 1.0 - regularized_beta(shape, shape, 0.5 * (1.0 - q / root_n));
    return regularized_beta(shape, shape, 0.5 * (1.0 + q / root_n));
}

double sphere_coord_sf(double q, std::int64_t n) {
    check_dimension(n);
    if (std::isnan(q)) throw std::domain_error("sphere_coord_sf: NaN argument");
    return sphere_coord_cdf(-q, n);
}

double sphere_coord_pdf(double q, std::int64_t n) {
    check_dimension(n);
    const double nd = static_cast<double>(n);
    const double base = 1.0 - q * q / nd;
    if (base < 0.0) return 0.0;
    const double log_norm =
        std::lgamma(0.5 * nd) - std::lgamma(0.5 * (nd - 1.0)) - 0.5 * std::log(std::numbers::pi * nd);
    if (n == 3) return std::exp(log_norm);
    if (base == 0.0) return n == 2 ? std::numeric_limits<double>::infinity() : 0.0;
    return std::exp(log_norm + 0.5 * (nd - 3.0) * std::log(base));
}

Chi2TailBounds chi2_tail_bounds(std::int64_t n, double t) {
    if (n < 1) throw std::domain_error("chi2_tail_bounds: n must be >= 1");
    if (!(t > 0.0)) throw std::domain_error("chi2_tail_bounds: t must be positive");
    const double bound = std::exp(-t);
    return {bound, bound};
}

std::pair<double, double> chi2_deviation_thresholds(std::int64_t n, double t) {
    if (n < 1 || !(t > 0.0)) throw std::domain_error("chi2_deviation_thresholds: need n >= 1, t > 0");
    const double root = 2.0 * std::sqrt(static_cast<double>(n) * t);
    return {root + 2.0 * t, root};
}

}  // namespace fbl
