#pragma once

#include <cstdint>
#include <span>

#include <json.hpp>

namespace fbl {

/// Point estimate with a symmetric confidence half-width.
struct EstimateWithCI {
    double point = 0.0;
    double half_width = 0.0;
    double confidence = 0.95;
    std::uint64_t samples = 0;

    double lower() const noexcept { return point - half_width; }
    double upper() const noexcept { return point + half_width; }
    bool contains(double x) const noexcept { return x >= lower() && x <= upper(); }
};

/// Two-sided normal critical value for the given confidence level.
double normal_critical_value(double confidence);

/// Proportion estimate. The half-width is half the width of the Wilson score
/// interval, so it stays positive when no successes were observed.
EstimateWithCI proportion_estimate(std::uint64_t successes, std::uint64_t trials, double confidence = 0.95);

/// Plug-in binomial standard error sqrt(p(1-p)/N).
double binomial_std_error(std::uint64_t successes, std::uint64_t trials);

/// Mean of the values with a normal-approximation interval from the sample
/// variance. Values are summed in index order.
EstimateWithCI mean_estimate(std::span<const double> values, double confidence = 0.95);

void to_json(nlohmann::json& j, const EstimateWithCI& e);
void from_json(const nlohmann::json& j, EstimateWithCI& e);

}  // namespace fbl
