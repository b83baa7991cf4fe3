#pragma once

// Rateless Gaussian random access protocol: staged decoding times n_0 < ... <
// n_K, a received-power gate at each time that estimates the number of active
// transmitters, one feedback bit per time, and ML decoding over unordered
// message lists with identical encoding.

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "fbl/estimate.hpp"
#include "fbl/mac_sim.hpp"
#include "fbl/sphere.hpp"

namespace fbl {

class ScheduleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a required constant or setting is missing or inconsistent.
class RacConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RacSchedule {
    int users = 0;  ///< K, the largest number of simultaneous transmitters
    double power = 0.0;
    std::uint64_t messages = 0;
    std::vector<std::int64_t> decode_times;  ///< n_0 .. n_K
    std::vector<double> thresholds;          ///< lambda_0 .. lambda_K
    std::vector<double> eps;                 ///< eps_0 .. eps_K
    double c0 = 0.0;

    double log_messages() const;
    /// n_1 .. n_K as codeword block ends.
    std::vector<std::size_t> block_ends() const;
    /// Throws ScheduleError on a broken invariant.
    void validate() const;
};

struct RacScheduleRequest {
    int users = 0;
    double power = 1.0;
    std::vector<double> eps;  ///< eps_0 .. eps_K
    std::optional<std::uint64_t> messages;
    std::optional<std::int64_t> target_last_time;  ///< n_K, used when messages is empty
    double c0 = 0.0;
    /// Upper limit on lambda_0; n_0 grows until it holds. Values <= 0 select
    /// min(P, 1) / 2, which keeps the t = 0 and t = 1 gates disjoint.
    double lambda0_max = 0.0;
    std::int64_t max_blocklength = 10'000'000;
};

/// Smallest n >= 2 such that for every m >= n
///   k log M <= m C(kP) - sqrt(m (V(kP) + Vcr(k, P))) Qinv(eps) + log(m)/2 + c0.
/// Throws ScheduleError when that n exceeds max_n.
std::int64_t min_blocklength(int k, double log_m, double eps, double power, double c0, std::int64_t max_n);

/// Decoding times: n_k from min_blocklength for the common M, n_0 from
/// min_n0 and the lambda_0 limit, then raised to keep the times strictly
/// increasing. lambda_t = P/2 for t >= 1.
RacSchedule build_rac_schedule(const RacScheduleRequest& request);

/// |‖y‖² / n_t - (1 + tP)| <= lambda_t, where y is the prefix of length n_t.
bool power_typical(std::span<const double> y_prefix, int t, const RacSchedule& schedule);

/// Inner products of codeword prefixes, M x M row-major.
struct PrefixGram {
    std::size_t prefix = 0;
    std::size_t messages = 0;
    std::vector<double> values;

    static PrefixGram compute(const Codebook& cb, std::size_t prefix);
    double operator()(std::size_t a, std::size_t b) const { return values[a * messages + b]; }
};

/// ML decision among strictly increasing lists of t messages on the prefix of
/// length y_prefix.size(): maximizes <y, sum x_a> - ||sum x_a||^2 / 2. Ties go
/// to the lexicographically smallest list. Throws SizeError if C(M, t) > 2^24.
std::vector<std::uint64_t> decode_rac_list(const Codebook& cb, std::span<const double> y_prefix, int t,
                                           const PrefixGram* gram = nullptr, double* margin = nullptr);

enum class ErrorClass { none, repetition, wrong_time, wrong_message };
const char* to_string(ErrorClass c);

struct GateRecord {
    int t = 0;
    std::int64_t time = 0;
    double normalized_power = 0.0;
    bool typical = false;
};

struct TrialOutcome {
    int k_active = 0;
    std::optional<int> stop_index;
    std::vector<std::uint64_t> transmitted;
    std::vector<std::uint64_t> decoded;  ///< strictly increasing
    ErrorClass error = ErrorClass::none;
    std::vector<bool> feedback;  ///< one bit per visited time, true = ACK
    bool power_violation = false;
    std::vector<GateRecord> gates;  ///< filled when tracing
};

void to_json(nlohmann::json& j, const TrialOutcome& o);

struct RacRunOptions {
    CodebookMode mode = CodebookMode::ensemble;
    bool noiseless = false;  ///< test hook: y is the exact superposition, gates expect tP
    bool trace = false;      ///< record every gate evaluation
};

/// Runs epochs of the protocol. Epoch e with k active users draws from
/// derive_key(seed, {1, k, e}); fixed mode draws its single codebook from
/// derive_key(seed, 2).
class RacSimulator {
public:
    RacSimulator(RacSchedule schedule, std::uint64_t seed, RacRunOptions options = {});

    TrialOutcome run_epoch(int k_active, std::uint64_t epoch) const;
    const RacSchedule& schedule() const noexcept { return schedule_; }

private:
    RacSchedule schedule_;
    std::uint64_t seed_;
    RacRunOptions options_;
    std::vector<std::size_t> block_ends_;
    std::optional<Codebook> fixed_;
    std::vector<PrefixGram> grams_;  // fixed mode, index t - 1
};

struct ClassCounts {
    std::uint64_t epochs = 0;
    std::uint64_t none = 0;
    std::uint64_t repetition = 0;
    std::uint64_t wrong_time = 0;
    std::uint64_t wrong_message = 0;
    std::uint64_t power_violations = 0;

    std::uint64_t errors() const noexcept { return repetition + wrong_time + wrong_message; }
    void add(const TrialOutcome& o);
    ClassCounts& operator+=(const ClassCounts& other);
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct ActiveBreakdown {
    int k = 0;
    ClassCounts counts;
    EstimateWithCI repetition, wrong_time, wrong_message, overall;
};

struct ErrorBreakdown {
    std::vector<ActiveBreakdown> per_k;  ///< k = 0 .. K

    static ErrorBreakdown from_counts(const std::vector<ClassCounts>& counts);
};

/// epochs_per_k epochs for every k in 0..K. When `trace` is given, one JSON
/// line per epoch is written to it in (k, epoch) order.
ErrorBreakdown simulate_rac(const RacSchedule& schedule, std::uint64_t epochs_per_k, std::uint64_t seed,
                            RacRunOptions options = {}, unsigned workers = 1, std::ostream* trace = nullptr);

/// kappa(j, P) for j = 1..K (values[j - 1]). j = 1, 2 are the closed forms;
/// larger j come from `overrides` (listing kappa(3, P), kappa(4, P), ...) or,
/// when allow_placeholder is set, repeat kappa(2, P) and set `placeholder`.
struct KappaTable {
    std::vector<double> values;
    bool placeholder = false;
};
KappaTable kappa_table(int users, double power, std::span<const double> overrides = {},
                       bool allow_placeholder = false);

/// Upper bound on the probability of stopping at the wrong time with k
/// active users:
///   2 kappa(1) exp(-n_0 (kP - lambda_0)^2 / (8 (1 + kP)^2))
///   + 2 sum_{t=1..k} prod_{j<=t} kappa(j) exp(-n_t d_t^2 / (8 (1 + kP)^2)),
/// d_t = (k - t)P - lambda_t for t < k and d_k = lambda_k. With k = 0 it is
/// 2 kappa(1) exp(-n_0 lambda_0^2 / 8).
double wrong_time_bound(const RacSchedule& schedule, int k, const KappaTable& kappa);

void to_json(nlohmann::json& j, const RacSchedule& s);

}  // namespace fbl
