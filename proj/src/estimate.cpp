#include "fbl/estimate.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "fbl/parallel.hpp"
#include "fbl/specfun.hpp"

namespace fbl {

unsigned default_workers() {
    if (const char* env = std::getenv("FBL_GAUSAC_WORKERS")) {
        char* end = nullptr;
        const long value = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && value > 0) return static_cast<unsigned>(value);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

double normal_critical_value(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) throw std::domain_error("confidence must lie in (0, 1)");
    return gaussian_q_inv(0.5 * (1.0 - confidence));
}

EstimateWithCI proportion_estimate(std::uint64_t successes, std::uint64_t trials, double confidence) {
    if (successes > trials) throw std::invalid_argument("proportion_estimate: successes > trials");
    EstimateWithCI e;
    e.confidence = confidence;
    e.samples = trials;
    if (trials == 0) {
        e.half_width = 1.0;
        return e;
    }
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z = normal_critical_value(confidence);
    const double z2 = z * z;
    const double spread = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
    e.point = p;
    e.half_width = spread;
    return e;
}

double binomial_std_error(std::uint64_t successes, std::uint64_t trials) {
    if (trials == 0) return 0.0;
    const double p = static_cast<double>(successes) / static_cast<double>(trials);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

EstimateWithCI mean_estimate(std::span<const double> values, double confidence) {
    EstimateWithCI e;
    e.confidence = confidence;
    e.samples = values.size();
    if (values.empty()) return e;
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    e.point = mean;
    if (values.size() > 1) {
        const double var = ss / static_cast<double>(values.size() - 1);
        e.half_width = normal_critical_value(confidence) * std::sqrt(var / static_cast<double>(values.size()));
    }
    return e;
}

void to_json(nlohmann::json& j, const EstimateWithCI& e) {
    j = nlohmann::json{{"point", e.point},
                       {"half_width", e.half_width},
                       {"confidence", e.confidence},
                       {"samples", e.samples}};
}

void from_json(const nlohmann::json& j, EstimateWithCI& e) {
    j.at("point").get_to(e.point);
    j.at("half_width").get_to(e.half_width);
    j.at("confidence").get_to(e.confidence);
    j.at("samples").get_to(e.samples);
}

}  // namespace fbl
