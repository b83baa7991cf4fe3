#include "fbl/gaussian_region.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fbl/parallel.hpp"
#include "fbl/rng.hpp"
#include "fbl/specfun.hpp"

namespace fbl {

Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov) {
    if (cov.rows() != cov.cols()) throw MatrixError("covariance must be square");
    if (cov.size() > 0 &&
        (cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
        throw MatrixError("covariance must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw MatrixError("covariance eigen decomposition failed");
    const Eigen::VectorXd& values = eig.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    if (values.minCoeff() < -1e-10 * scale)
        throw MatrixError("covariance is not positive semidefinite (min eigenvalue " + std::to_string(values.minCoeff()) + ")");
    const Eigen::VectorXd roots = values.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal();
}

namespace {

void fill_gaussian_rows(Eigen::MatrixXd& out, const Eigen::MatrixXd& factor, const Eigen::VectorXd& mean,
                        std::uint64_t seed, unsigned workers) {
    const auto d = factor.rows();
    const std::size_t count = static_cast<std::size_t>(out.rows());
    const std::size_t shards = (count + kSampleShard - 1) / kSampleShard;
    parallel_for(
        shards, workers,
        [&](std::size_t shard) {
            Rng rng(derive_key(seed, shard));
            Eigen::VectorXd g(d);
            const std::size_t begin = shard * kSampleShard;
            const std::size_t end = std::min(count, begin + kSampleShard);
            for (std::size_t row = begin; row < end; ++row) {
                for (Eigen::Index i = 0; i < d; ++i) g(i) = rng.normal();
                out.row(static_cast<Eigen::Index>(row)) = (mean + factor * g).transpose();
            }
        },
        1);
}

}  // namespace

Eigen::MatrixXd mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, std::size_t count,
                           std::uint64_t seed, unsigned workers) {
    if (mean.size() != cov.rows()) throw MatrixError("mean and covariance dimensions differ");
    const Eigen::MatrixXd factor = covariance_factor(cov);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(count), mean.size());
    fill_gaussian_rows(out, factor, mean, seed, workers);
    return out;
}

OrthantEstimator::OrthantEstimator(const Eigen::MatrixXd& cov, std::size_t count, std::uint64_t seed, unsigned workers)
    : samples_(mvn_sample(Eigen::VectorXd::Zero(cov.rows()), cov, count, seed, workers).transpose()) {}

EstimateWithCI OrthantEstimator::probability(const Eigen::VectorXd& z, double confidence) const {
    if (z.size() != samples_.rows())
        throw std::invalid_argument("orthant threshold has dimension " + std::to_string(z.size()) + ", expected " +
                                    std::to_string(samples_.rows()));
    std::uint64_t inside = 0;
    const Eigen::Index d = samples_.rows();
    for (Eigen::Index c = 0; c < samples_.cols(); ++c) {
        bool ok = true;
        for (Eigen::Index i = 0; i < d && ok; ++i) ok = samples_(i, c) <= z(i);
        inside += ok;
    }
    return proportion_estimate(inside, static_cast<std::uint64_t>(samples_.cols()), confidence);
}

EstimateWithCI lower_orthant_prob(const Eigen::MatrixXd& cov, const Eigen::VectorXd& z, std::size_t count,
                                  std::uint64_t seed, unsigned workers) {
    if (z.size() != cov.rows()) throw std::invalid_argument("lower_orthant_prob: dimension mismatch");
    return OrthantEstimator(cov, count, seed, workers).probability(z);
}

RateTuple RateTuple::from_log_messages(const std::vector<double>& log_m) {
    RateTuple rt;
    rt.users_ = static_cast<int>(log_m.size());
    const std::size_t count = subset_count(rt.users_);
    rt.per_user_ = log_m;
    rt.entries_.assign(count, 0.0);
    for (std::uint32_t mask = 1; mask <= count; ++mask)
        for (int i = 0; i < rt.users_; ++i)
            if ((mask >> i) & 1u) rt.entries_[mask - 1] += log_m[static_cast<std::size_t>(i)];
    return rt;
}

RateTuple RateTuple::symmetric(int users, double log_m) {
    return from_log_messages(std::vector<double>(static_cast<std::size_t>(users), log_m));
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::achievable: return "achievable";
        case Verdict::not_achievable: return "not_achievable";
        case Verdict::uncertain: return "uncertain";
    }
    return "?";
}

Eigen::VectorXd region_threshold(std::int64_t n, const PowerAllocation& pa, const RateTuple& rt, double c0) {
    if (n < 2) throw std::domain_error("blocklength must be >= 2");
    if (rt.users() != pa.users()) throw std::invalid_argument("rate tuple and power allocation differ in user count");
    const CapacityVector cap = capacity_vector(pa);
    const double nd = static_cast<double>(n);
    const double offset = 0.5 * std::log(nd) + c0;
    Eigen::VectorXd z(static_cast<Eigen::Index>(cap.entries.size()));
    for (std::size_t i = 0; i < cap.entries.size(); ++i)
        z(static_cast<Eigen::Index>(i)) = (nd * cap.entries[i] - rt.entries()[i] + offset) / std::sqrt(nd);
    return z;
}

namespace {

Verdict classify(const EstimateWithCI& p, double eps) {
    const double target = 1.0 - eps;
    if (std::fabs(p.point - target) < p.half_width) return Verdict::uncertain;
    return p.point >= target ? Verdict::achievable : Verdict::not_achievable;
}

void check_eps(double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("eps must lie in (0, 1)");
}

}  // namespace

RegionTest rate_tuple_achievable(std::int64_t n, double eps, const PowerAllocation& pa, const RateTuple& rt,
                                 double c0, std::size_t count, std::uint64_t seed, unsigned workers) {
    check_eps(eps);
    const Eigen::VectorXd z = region_threshold(n, pa, rt, c0);
    const DispersionMatrix v = dispersion_matrix(pa);
    const EstimateWithCI p = lower_orthant_prob(v.entries, z, count, seed, workers);
    return {classify(p, eps), p, z};
}

RayBoundary region_boundary_on_ray(std::int64_t n, double eps, const PowerAllocation& pa,
                                   const std::vector<double>& direction, double c0, std::size_t count,
                                   std::uint64_t seed, unsigned workers) {
    check_eps(eps);
    if (static_cast<int>(direction.size()) != pa.users()) throw std::invalid_argument("ray direction has wrong size");
    const double reach = *std::max_element(direction.begin(), direction.end(),
                                           [](double a, double b) { return std::fabs(a) < std::fabs(b); });
    if (reach == 0.0) throw std::invalid_argument("ray direction must be nonzero");
    const OrthantEstimator estimator(dispersion_matrix(pa).entries, count, seed, workers);
    auto prob_at = [&](double t) {
        std::vector<double> log_m(direction);
        for (double& x : log_m) x *= t;
        return estimator.probability(region_threshold(n, pa, RateTuple::from_log_messages(log_m), c0));
    };
    const double target = 1.0 - eps;
    const double tolerance = 1e-3 * std::sqrt(static_cast<double>(n)) / std::fabs(reach);
    double lo = 0.0;
    if (prob_at(lo).point < target) return {0.0, tolerance * std::fabs(reach), prob_at(lo)};
    double hi = 1.0;
    while (prob_at(hi).point >= target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw std::runtime_error("region_boundary_on_ray: boundary not bracketed");
    }
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        if (prob_at(mid).point >= target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return {lo, tolerance * std::fabs(reach), prob_at(lo)};
}

double achievable_logM_symmetric(std::int64_t n, double eps, int users, double power, double c0) {
    if (n < 2) throw std::domain_error("blocklength must be >= 2");
    if (users < 1) throw std::domain_error("users must be >= 1");
    check_eps(eps);
    const double nd = static_cast<double>(n);
    const double kp = users * power;
    const double spread = std::sqrt(nd * (dispersion_v(kp) + cross_dispersion(users, power)));
    return (nd * capacity(kp) - spread * gaussian_q_inv(eps) + 0.5 * std::log(nd) + c0) / users;
}

double lambda0_for(std::int64_t n0, double power, double eps0) {
    if (n0 < 1) throw std::domain_error("n0 must be positive");
    check_eps(eps0);
    return std::sqrt(-8.0 * std::log(eps0 / (2.0 * kappa1(power))) / static_cast<double>(n0));
}

MinN0 min_n0(std::int64_t n1, double power, double eps0) {
    if (n1 < 3) throw std::domain_error("min_n0: n1 must be >= 3");
    if (!(power > 0.0)) throw std::domain_error("min_n0: power must be positive");
    const double constant = 4.0 * (1.0 + power * power) / (power * power);
    const auto n0 = static_cast<std::int64_t>(std::ceil(constant * std::log(static_cast<double>(n1)) - 1e-9));
    const std::int64_t clamped = std::max<std::int64_t>(1, n0);
    return {clamped, lambda0_for(clamped, power, eps0)};
}

double tv_gaussian_bound(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                         const Eigen::MatrixXd& cov2) {
    const auto d = cov1.rows();
    if (cov1.cols() != d || cov2.rows() != d || cov2.cols() != d || mu1.size() != d || mu2.size() != d)
        throw MatrixError("tv_gaussian_bound: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov1);
    if (eig.info() != Eigen::Success) throw MatrixError("tv_gaussian_bound: eigen decomposition failed");
    const Eigen::VectorXd values = eig.eigenvalues();
    if (values.minCoeff() <= 1e-14 * std::max(1.0, values.cwiseAbs().maxCoeff()))
        throw MatrixError("tv_gaussian_bound: first covariance must be positive definite");
    const Eigen::MatrixXd inv_sqrt = eig.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() *
                                     eig.eigenvectors().transpose();
    const Eigen::MatrixXd whitened = inv_sqrt * cov2 * inv_sqrt - Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd shift = inv_sqrt * (mu1 - mu2);
    return (2.0 + std::sqrt(6.0)) / 4.0 * whitened.norm() + 0.5 * shift.norm();
}

double stam_bound(std::int64_t n, int k) {
    if (k < 1) throw std::domain_error("stam_bound: k must be >= 1");
    if (n <= k + 2) throw std::domain_error("stam_bound: need n > k + 2");
    const double nd = static_cast<double>(n);
    return 2.0 * (std::pow(nd / (nd - k - 2.0), 0.5 * k) - 1.0);
}

}  // namespace fbl
