#include "fbl/dispersion.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace fbl {

std::size_t subset_count(int users) {
    if (users < 1 || users > kMaxUsers)
        throw SizeError("user count must lie in [1, " + std::to_string(kMaxUsers) + "], got " + std::to_string(users));
    return (std::size_t{1} << users) - 1;
}

PowerAllocation::PowerAllocation(std::vector<double> powers) : powers_(std::move(powers)) {
    if (powers_.empty()) throw std::invalid_argument("PowerAllocation: at least one user required");
    if (powers_.size() > static_cast<std::size_t>(kMaxUsers))
        throw SizeError("PowerAllocation: at most " + std::to_string(kMaxUsers) + " users supported");
    for (double p : powers_)
        if (!(p > 0.0) || !std::isfinite(p)) throw std::domain_error("PowerAllocation: powers must be positive and finite");
}

PowerAllocation PowerAllocation::symmetric(int users, double power) {
    if (users < 1) throw std::invalid_argument("PowerAllocation: at least one user required");
    if (users > kMaxUsers) throw SizeError("PowerAllocation: too many users");
    return PowerAllocation(std::vector<double>(static_cast<std::size_t>(users), power));
}

double PowerAllocation::sum(std::uint32_t mask) const noexcept {
    double total = 0.0;
    for (std::size_t i = 0; i < powers_.size(); ++i)
        if ((mask >> i) & 1u) total += powers_[i];
    return total;
}

double PowerAllocation::sum_of_squares(std::uint32_t mask) const noexcept {
    double total = 0.0;
    for (std::size_t i = 0; i < powers_.size(); ++i)
        if ((mask >> i) & 1u) total += powers_[i] * powers_[i];
    return total;
}

double capacity(double power) {
    if (!(power >= 0.0)) throw std::domain_error("capacity: power must be nonnegative");
    return 0.5 * std::log1p(power);
}

double dispersion_v(double power) {
    if (!(power >= 0.0)) throw std::domain_error("dispersion_v: power must be nonnegative");
    const double denom = 1.0 + power;
    return power * (power + 2.0) / (2.0 * denom * denom);
}

double cross_dispersion(int users, double power) {
    if (users < 1) throw std::domain_error("cross_dispersion: users must be >= 1");
    if (!(power > 0.0)) throw std::domain_error("cross_dispersion: power must be positive");
    const double k = users;
    const double denom = 1.0 + k * power;
    return k * (k - 1.0) * power * power / (2.0 * denom * denom);
}

CapacityVector capacity_vector(const PowerAllocation& pa) {
    const std::size_t count = subset_count(pa.users());
    CapacityVector c{pa.users(), std::vector<double>(count)};
    for (std::uint32_t mask = 1; mask <= count; ++mask) c.entries[mask - 1] = capacity(pa.sum(mask));
    return c;
}

DispersionMatrix dispersion_matrix(const PowerAllocation& pa) {
    const std::size_t count = subset_count(pa.users());
    DispersionMatrix v{pa.users(), Eigen::MatrixXd(count, count)};
    for (std::uint32_t a = 1; a <= count; ++a) {
        for (std::uint32_t b = a; b <= count; ++b) {
            const double pa_sum = pa.sum(a);
            const double pb_sum = pa.sum(b);
            const std::uint32_t common = a & b;
            const double pc = pa.sum(common);
            const double numer = pa_sum * pb_sum + 2.0 * pc + pc * pc - pa.sum_of_squares(common);
            // singleton diagonal entries are exactly the point-to-point dispersion
            const double value = (a == b && __builtin_popcount(a) == 1)
                                     ? dispersion_v(pa_sum)
                                     : numer / (2.0 * (1.0 + pa_sum) * (1.0 + pb_sum));
            v.entries(a - 1, b - 1) = value;
            v.entries(b - 1, a - 1) = value;
        }
    }
    return v;
}

Eigen::Matrix3d dispersion_matrix_two_user(double p1, double p2) {
    const double p12 = p1 + p2;
    const double v1_2 = 0.5 * p1 * p2 / ((1.0 + p1) * (1.0 + p2));
    const double v1_12 = 0.5 * p1 * (2.0 + p12) / ((1.0 + p1) * (1.0 + p12));
    const double v2_12 = 0.5 * p2 * (2.0 + p12) / ((1.0 + p2) * (1.0 + p12));
    const double v12 = p1 * p2 / ((1.0 + p12) * (1.0 + p12));
    Eigen::Matrix3d m;
    m << dispersion_v(p1), v1_2, v1_12,
         v1_2, dispersion_v(p2), v2_12,
         v1_12, v2_12, dispersion_v(p12) + v12;
    return m;
}

double l_function(double power, double s) {
    if (!(power > 0.0) || !(s > 0.0)) throw std::domain_error("l_function: arguments must be positive");
    const double ps = power * s;
    const double root = std::sqrt(1.0 + 4.0 * ps);
    const double ratio = (1.0 + 4.0 * ps - root) / std::pow(root - 1.0, 5);
    return 8.0 * std::pow(ps, 1.5) / std::sqrt(2.0 * std::numbers::pi) * std::sqrt(ratio);
}

double kappa1(double power) {
    if (!(power > 0.0)) throw std::domain_error("kappa1: power must be positive");
    return 27.0 * std::sqrt(std::numbers::pi / 8.0) * (1.0 + power) / std::sqrt(1.0 + 2.0 * power);
}

double kappa2(double p1, double p2) {
    if (!(p1 > 0.0) || !(p2 > 0.0)) throw std::domain_error("kappa2: powers must be positive");
    return 9.0 / (2.0 * std::numbers::pi * std::numbers::sqrt2) * (p1 + p2) / std::sqrt(p1 * p2);
}

namespace {

// Maximize f on [lo, hi]: dense grid, then golden-section search around the
// best grid point.
template <class F>
std::pair<double, double> maximize_on_interval(F f, double lo, double hi, int grid_points = 10000) {
    double best_u = lo;
    double best_f = f(lo);
    const double step = (hi - lo) / grid_points;
    for (int i = 1; i <= grid_points; ++i) {
        const double u = i == grid_points ? hi : lo + step * i;
        const double value = f(u);
        if (value > best_f) {
            best_f = value;
            best_u = u;
        }
    }
    double a = std::max(lo, best_u - step);
    double b = std::min(hi, best_u + step);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    for (int iter = 0; iter < 100 && b - a > 1e-14 * std::max(1.0, std::fabs(b)); ++iter) {
        if (f(c) > f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    const double mid = 0.5 * (a + b);
    if (f(mid) > best_f) {
        best_f = f(mid);
        best_u = mid;
    }
    return {best_u, best_f};
}

}  // namespace

AnalysisConstants analysis_constants(const PowerAllocation& pa) {
    AnalysisConstants out;
    for (double p : pa.powers()) {
        out.kappa1.push_back(kappa1(p));
        const double l = l_function(p, 1.0 + p);
        out.l_values.push_back(l);
        out.g.push_back(3.0 * std::numbers::ln2 * l);
    }
    if (pa.users() == 2) {
        const double p1 = pa[0];
        const double p2 = pa[1];
        const double p12 = p1 + p2;
        out.kappa2 = kappa2(p1, p2);
        const double lo = p12 - std::sqrt(p1 * p2);
        const double hi = (std::sqrt(p1) + std::sqrt(p2)) * (std::sqrt(p1) + std::sqrt(p2));
        auto [u, value] = maximize_on_interval([&](double x) { return 1.5 * l_function(x, 1.0 + p12); }, lo, hi);
        out.k2 = value;
        out.k2_argmax = u;
        out.g12 = 2.0 * std::numbers::ln2 * value;
    }
    return out;
}

void to_json(nlohmann::json& j, const CapacityVector& c) {
    nlohmann::json entries = nlohmann::json::object();
    for (std::size_t i = 0; i < c.entries.size(); ++i) entries[std::to_string(i + 1)] = c.entries[i];
    j = nlohmann::json{{"users", c.users}, {"index", "subset bitmask, bit i-1 set for user i"}, {"entries", entries}};
}

void to_json(nlohmann::json& j, const DispersionMatrix& v) {
    nlohmann::json rows = nlohmann::json::object();
    for (Eigen::Index a = 0; a < v.entries.rows(); ++a) {
        nlohmann::json row = nlohmann::json::object();
        for (Eigen::Index b = 0; b < v.entries.cols(); ++b) row[std::to_string(b + 1)] = v.entries(a, b);
        rows[std::to_string(a + 1)] = row;
    }
    j = nlohmann::json{{"users", v.users}, {"index", "subset bitmask, bit i-1 set for user i"}, {"entries", rows}};
}

CapacityVector capacity_vector_from_json(const nlohmann::json& j) {
    CapacityVector c;
    c.users = j.at("users").get<int>();
    const std::size_t count = subset_count(c.users);
    c.entries.resize(count);
    for (std::uint32_t mask = 1; mask <= count; ++mask) c.entries[mask - 1] = j.at("entries").at(std::to_string(mask)).get<double>();
    return c;
}

DispersionMatrix dispersion_matrix_from_json(const nlohmann::json& j) {
    DispersionMatrix v;
    v.users = j.at("users").get<int>();
    const auto count = static_cast<Eigen::Index>(subset_count(v.users));
    v.entries.resize(count, count);
    const auto& rows = j.at("entries");
    for (Eigen::Index a = 0; a < count; ++a)
        for (Eigen::Index b = 0; b < count; ++b)
            v.entries(a, b) = rows.at(std::to_string(a + 1)).at(std::to_string(b + 1)).get<double>();
    return v;
}

}  // namespace fbl
