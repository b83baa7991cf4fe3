#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fbl/dispersion.hpp"
#include "fbl/estimate.hpp"

namespace fbl {

class MatrixError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Samples are drawn in shards of this many rows; shard s uses the stream
/// derive_key(seed, s). Results are therefore identical for any worker count.
inline constexpr std::size_t kSampleShard = 1 << 14;

/// Factor A with A A^T = cov. Cholesky first; on failure, the eigen
/// decomposition with eigenvalues floored at zero (rejected if any eigenvalue
/// is below -1e-10 relative to the largest magnitude).
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov);

/// `count` i.i.d. rows from N(mean, cov).
Eigen::MatrixXd mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, std::size_t count,
                           std::uint64_t seed, unsigned workers = 1);

/// Common-random-number estimator of P[Z <= z] for Z ~ N(0, cov): the samples
/// are drawn once and reused for every threshold vector, which makes the
/// estimate monotone in each coordinate of z.
class OrthantEstimator {
public:
    OrthantEstimator(const Eigen::MatrixXd& cov, std::size_t count, std::uint64_t seed, unsigned workers = 1);

    EstimateWithCI probability(const Eigen::VectorXd& z, double confidence = 0.95) const;
    std::size_t dimension() const noexcept { return static_cast<std::size_t>(samples_.rows()); }

private:
    Eigen::MatrixXd samples_;  // d x count, one sample per column
};

EstimateWithCI lower_orthant_prob(const Eigen::MatrixXd& cov, const Eigen::VectorXd& z, std::size_t count,
                                  std::uint64_t seed, unsigned workers = 1);

/// Sum of log M_s over each nonempty subset, subset-indexed like CapacityVector.
class RateTuple {
public:
    /// From per-user log M values (nats).
    static RateTuple from_log_messages(const std::vector<double>& log_m);
    /// Equal log M for every user.
    static RateTuple symmetric(int users, double log_m);

    int users() const noexcept { return users_; }
    double operator[](SubsetIndex s) const { return entries_.at(s.position()); }
    const std::vector<double>& entries() const noexcept { return entries_; }
    const std::vector<double>& per_user() const noexcept { return per_user_; }

private:
    int users_ = 0;
    std::vector<double> per_user_;
    std::vector<double> entries_;
};

enum class Verdict { achievable, not_achievable, uncertain };
const char* to_string(Verdict v);

struct RegionTest {
    Verdict verdict;
    EstimateWithCI probability;  ///< P[Z <= z] estimate
    Eigen::VectorXd threshold;   ///< z
};

/// Threshold vector z = (n C - rt + (log n / 2 + c0) 1) / sqrt(n).
Eigen::VectorXd region_threshold(std::int64_t n, const PowerAllocation& pa, const RateTuple& rt, double c0);

/// Membership of rt in the normal-approximation achievable region: compares
/// P[Z <= z] with 1 - eps, Z ~ N(0, V(P)). "uncertain" when 1 - eps lies
/// within the CI.
RegionTest rate_tuple_achievable(std::int64_t n, double eps, const PowerAllocation& pa, const RateTuple& rt,
                                 double c0, std::size_t count, std::uint64_t seed, unsigned workers = 1);

struct RayBoundary {
    double scale;                ///< largest t (to tolerance) with t * direction achievable
    double tolerance;            ///< bisection tolerance in nats of the largest direction entry
    EstimateWithCI probability;  ///< P[Z <= z] at the returned scale
};

/// Bisection along the ray t * direction (per-user log M) for the edge of
/// the achievable region, with tolerance 1e-3 sqrt(n) nats.
RayBoundary region_boundary_on_ray(std::int64_t n, double eps, const PowerAllocation& pa,
                                   const std::vector<double>& direction, double c0, std::size_t count,
                                   std::uint64_t seed, unsigned workers = 1);

/// Per-user log M (nats) at the symmetric k-user boundary:
/// (1/k)[n C(kP) - sqrt(n (V(kP) + Vcr(k, P))) Qinv(eps) + log(n)/2 + c0].
double achievable_logM_symmetric(std::int64_t n, double eps, int users, double power, double c0 = 0.0);

struct MinN0 {
    std::int64_t n0;
    double lambda0;  ///< threshold at n0 meeting the eps0 target
};

/// ceil(4 (1 + P^2) / P^2 * log n1), with the lambda0 that makes
/// 2 kappa1(P) exp(-n0 lambda0^2 / 8) = eps0 at that n0.
MinN0 min_n0(std::int64_t n1, double power, double eps0);

/// lambda0 = sqrt(-8 log(eps0 / (2 kappa1(P))) / n0).
double lambda0_for(std::int64_t n0, double power, double eps0);

/// Upper bound on TV(N(mu1, cov1), N(mu2, cov2)):
/// (2 + sqrt 6)/4 ||cov1^{-1/2} cov2 cov1^{-1/2} - I||_F + sqrt(dmu^T cov1^{-1} dmu) / 2.
double tv_gaussian_bound(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                         const Eigen::MatrixXd& cov2);

/// 2[(n / (n - k - 2))^{k/2} - 1], bound on the TV distance between k
/// coordinates of a scaled uniform sphere point and N(0, I_k).
double stam_bound(std::int64_t n, int k);

}  // namespace fbl
