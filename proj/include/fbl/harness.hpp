#pragma once

// Experiment configuration, grid execution and result emission.
//
// Config files are `key = value` lines; `#` starts a comment and lists are
// comma separated. Keys:
//   mode           rates-mac | rates-rac | simulate-mac | simulate-rac | verify
//   n              blocklengths (rates-rac / simulate-rac: target n_K)
//   power          per-user powers P (symmetric allocation)
//   eps            target error probabilities
//   messages       messages per user M
//   users          numbers of users K
//   trials         Monte Carlo trials per point (default 100000)
//   seed           master seed (default 0)
//   out            CSV output path (default stdout)
//   c0             constant term of the rate expansion (default 0)
//   inner_samples  inner draws for multi-user RCU terms (default 10000)
//   codebook       ensemble | fixed (default ensemble)
//   lambda0_max    limit on the t = 0 gate threshold (default min(P, 1)/2)
//   kappa          kappa(3, P), kappa(4, P), ... for wrong-time bounds
//   kappa_placeholder  true: reuse kappa(2, P) for j >= 3 (flagged)
// Every key may appear at most once.

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbl/mac_sim.hpp"

namespace fbl {

enum class Mode { rates_mac, rates_rac, simulate_mac, simulate_rac, verify };
const char* to_string(Mode m);
std::optional<Mode> parse_mode(std::string_view text);

/// All problems found in a config, each prefixed with its key.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

struct ExperimentConfig {
    std::optional<Mode> mode;
    std::vector<std::int64_t> n;
    std::vector<double> power;
    std::vector<double> eps;
    std::vector<std::uint64_t> messages;
    std::vector<int> users;
    std::uint64_t trials = 100000;
    std::uint64_t seed = 0;
    std::optional<std::string> out;
    double c0 = 0.0;
    std::uint64_t inner_samples = 10000;
    CodebookMode codebook = CodebookMode::ensemble;
    std::optional<double> lambda0_max;
    std::vector<double> kappa;
    bool kappa_placeholder = false;

    /// Mode-specific requirements (which lists must be present). Throws
    /// ConfigError listing every violation.
    void validate() const;
};

ExperimentConfig parse_config(std::string_view text);

/// One point of the Cartesian product of the parameter lists. Lists that a
/// mode does not use are left out of the product.
struct GridPoint {
    std::optional<std::int64_t> n;
    std::optional<double> power;
    std::optional<double> eps;
    std::optional<std::uint64_t> messages;
    std::optional<int> users;

    /// Stable text form used to derive the per-point seed.
    std::string canonical(Mode mode) const;
};

std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg);

/// derive_key(master, FNV-1a(point.canonical(mode))).
std::uint64_t point_seed(std::uint64_t master, Mode mode, const GridPoint& point);

struct ResultRow {
    Mode mode = Mode::verify;
    std::optional<std::int64_t> n;
    std::optional<int> users;
    std::optional<double> power;
    std::optional<double> eps;
    std::optional<std::uint64_t> messages;
    std::string metric;
    double value = 0.0;
    std::optional<double> ci_half_width;
    std::optional<std::uint64_t> samples;
    std::uint64_t seed = 0;
};

inline constexpr const char* kCsvHeader = "mode,n,K,P,eps,M,metric_name,value,ci_half_width,samples,seed";

/// One CSV line (no newline); reals use %.17g, absent fields are empty.
std::string format_csv_row(const ResultRow& row);
void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
nlohmann::json rows_to_json(const std::vector<ResultRow>& rows);

struct RunOptions {
    unsigned workers = 1;
    std::ostream* trace = nullptr;  ///< per-epoch JSON lines for simulate-rac
    std::ostream* log = nullptr;    ///< diagnostics such as per-point guard violations
};

struct RunResult {
    std::vector<ResultRow> rows;
    bool verification_failed = false;
};

/// Runs every grid point; rows come back in grid order whatever the worker
/// count. A point that violates a module guard yields a single
/// `guard_violation` row (value NaN) and the grid continues.
RunResult run_experiment(Mode mode, const ExperimentConfig& cfg, const RunOptions& options = {});

}  // namespace fbl
