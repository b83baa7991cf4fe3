#pragma once

// Monte Carlo simulation of the K-user Gaussian MAC random code with
// spherical codebooks and maximum-likelihood decoding, and a Monte Carlo
// evaluation of the random-coding union (RCU) bound for the same ensemble.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fbl/dispersion.hpp"
#include "fbl/estimate.hpp"
#include "fbl/rng.hpp"
#include "fbl/sphere.hpp"

namespace fbl {

/// Largest number of message tuples the brute-force decoder will enumerate.
inline constexpr std::uint64_t kMaxDecoderCandidates = std::uint64_t{1} << 24;
/// Largest number of doubles a trial may hold (codebooks plus Gram blocks).
inline constexpr std::uint64_t kMaxTrialDoubles = std::uint64_t{1} << 27;

enum class CodebookMode {
    ensemble,  ///< fresh codebooks every trial
    fixed,     ///< one codebook realisation shared by all trials
};

struct MacConfig {
    std::int64_t n = 0;
    PowerAllocation powers{{1.0}};
    std::vector<std::uint64_t> messages;  ///< M_i per user
    std::uint64_t trials = 100000;
    std::uint64_t seed = 0;
    std::uint64_t inner_samples = 10000;
    CodebookMode mode = CodebookMode::ensemble;
    bool noiseless = false;  ///< test hook: y is the exact superposition

    int users() const noexcept { return powers.users(); }
    /// Throws std::invalid_argument / SizeError describing the first violation.
    void validate() const;
};

struct MacTrialResult {
    std::vector<std::uint64_t> transmitted;
    std::vector<std::uint64_t> decoded;
    bool error = false;
    double margin = 0.0;  ///< best minus runner-up decoder statistic
};

/// Codebook for every user. Stream for user i is derive_key(key, i).
std::vector<Codebook> generate_codebooks(const MacConfig& cfg, std::uint64_t key);

/// Sum of the codewords plus i.i.d. N(0, 1) noise from `noise`; no noise when
/// `noise` is null. Every codeword must have length n.
std::vector<double> apply_channel(std::span<const std::span<const double>> codewords, std::size_t n, Rng* noise);

/// Maximum-likelihood decision: the message tuple maximizing
///   <y, sum_i x_i(m_i)> - ||sum_i x_i(m_i)||^2 / 2,
/// i.e. minimizing ||y - sum_i x_i(m_i)||. Ties go to the lexicographically
/// smallest tuple. When `margin` is given it receives best minus runner-up.
std::vector<std::uint64_t> decode_mac_ml(std::span<const Codebook> codebooks, std::span<const double> y,
                                         double* margin = nullptr);

/// One trial: uniform messages, channel, decoder. Trial `index` draws from
/// derive_key(cfg.seed, {1, index}); `fixed` supplies the codebooks in fixed
/// mode.
MacTrialResult run_mac_trial(const MacConfig& cfg, std::uint64_t index, const std::vector<Codebook>* fixed = nullptr);

struct MacSimResult {
    EstimateWithCI error;
    std::uint64_t errors = 0;
    std::uint64_t trials = 0;
};

MacSimResult simulate_mac(const MacConfig& cfg, unsigned workers = 1);

/// P[<w, Xbar> - nP/2 >= threshold] for Xbar uniform on the sphere of radius
/// sqrt(nP), by the sphere first-coordinate law.
double single_user_tail(double power, std::int64_t n, double w_norm, double threshold);

/// P[<w, sum_i Xbar_i> - ||sum_i Xbar_i||^2 / 2 >= threshold] for independent
/// uniform spherical Xbar_i with the given powers, by Monte Carlo. Each draw
/// samples only the (s+1)-dimensional coordinates that the statistic depends
/// on, s = powers.size() < n.
EstimateWithCI replaced_users_tail_mc(std::span<const double> powers, std::int64_t n, double w_norm,
                                      double threshold, std::uint64_t samples, Rng& rng);

/// Monte Carlo estimate of the RCU bound
///   E[min{1, sum_S prod_{i in S}(M_i - 1) P[i_S(Xbar_S) >= i_S(X_S) | X, Y]}]
/// with cfg.trials outer samples. Single-user terms are exact; multi-user
/// terms use cfg.inner_samples inner draws. K <= 3.
EstimateWithCI rcu_mc_estimate(const MacConfig& cfg, unsigned workers = 1);

}  // namespace fbl
