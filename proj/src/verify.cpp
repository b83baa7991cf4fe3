#include "fbl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "fbl/dispersion.hpp"
#include "fbl/gaussian_region.hpp"
#include "fbl/mac_sim.hpp"
#include "fbl/parallel.hpp"
#include "fbl/rac_sim.hpp"
#include "fbl/rng.hpp"
#include "fbl/specfun.hpp"
#include "fbl/sphere.hpp"

namespace fbl {

namespace {

// Stream tags so that checks sharing a seed do not share draws.
enum Tag : std::uint64_t {
    kChi2 = 11,
    kKs,
    kMoments,
    kPairwise,
    kGaussTv,
    kMacOracle,
    kRacOracle,
    kDispersion,
};

std::string fmt(const char* label, double v) {
    std::ostringstream s;
    s << label << v;
    return s.str();
}

template <class F>
double simpson(F&& f, double a, double b, std::size_t intervals) {
    if (intervals % 2) ++intervals;
    const double h = (b - a) / static_cast<double>(intervals);
    double acc = f(a) + f(b);
    for (std::size_t i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
    return acc * h / 3.0;
}

// Integral of |d| over [a, b], split where d changes sign so each piece is smooth.
template <class F>
double abs_integral(F&& d, double a, double b, std::size_t intervals) {
    constexpr std::size_t kScan = 4096;
    std::vector<double> knots{a};
    const double step = (b - a) / kScan;
    for (std::size_t i = 0; i < kScan; ++i) {
        double lo = a + step * static_cast<double>(i), hi = lo + step;
        if (i + 1 == kScan) hi = b;
        if (d(hi) == 0.0 && i + 1 < kScan) {
            knots.push_back(hi);
            continue;
        }
        if (!(d(lo) * d(hi) < 0.0)) continue;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (d(lo) * d(mid) <= 0.0 ? hi : lo) = mid;
        }
        knots.push_back(0.5 * (lo + hi));
    }
    knots.push_back(b);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const auto share = static_cast<std::size_t>(
            std::ceil(static_cast<double>(intervals) * (knots[i + 1] - knots[i]) / (b - a)));
        total += std::abs(simpson(d, knots[i], knots[i + 1], std::max<std::size_t>(share, 16)));
    }
    return total;
}

double normal_density(double x, double mu, double var) {
    const double d = x - mu;
    return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace

void to_json(nlohmann::json& j, const CheckResult& r) {
    j = nlohmann::json{{"name", r.name},   {"passed", r.passed},   {"statistic", r.statistic},
                       {"limit", r.limit}, {"samples", r.samples}, {"detail", r.detail}};
}

std::vector<CheckResult> check_chi2_tails(std::int64_t n, double t, std::uint64_t samples, std::uint64_t seed,
                                          unsigned workers) {
    const auto [upper_dev, lower_dev] = chi2_deviation_thresholds(n, t);
    const auto bounds = chi2_tail_bounds(n, t);
    std::vector<unsigned char> upper(samples), lower(samples);
    const double nd = static_cast<double>(n);
    parallel_for(samples, workers, [&](std::size_t i) {
        Rng rng(derive_key(seed, {kChi2, static_cast<std::uint64_t>(n), i}));
        double chi2 = 0.0;
        for (std::int64_t k = 0; k < n; ++k) {
            const double z = rng.normal();
            chi2 += z * z;
        }
        upper[i] = chi2 - nd >= upper_dev;
        lower[i] = chi2 - nd <= -lower_dev;
    });
    std::vector<CheckResult> out;
    auto finish = [&](const char* side, const std::vector<unsigned char>& hits, double bound) {
        std::uint64_t count = 0;
        for (unsigned char h : hits) count += h;
        const double p = static_cast<double>(count) / static_cast<double>(samples);
        const double limit = bound + 3.0 * binomial_std_error(count, samples);
        std::ostringstream name;
        name << "chi2_" << side << "_tail_n" << n << "_t" << t;
        out.push_back({name.str(), p <= limit, p, limit, samples, "frequency vs exp(-t) + 3 sigma"});
    };
    finish("upper", upper, bounds.upper_dev_bound);
    finish("lower", lower, bounds.lower_dev_bound);
    return out;
}

CheckResult check_sphere_ks(std::int64_t n, std::uint64_t samples, std::uint64_t seed, unsigned workers) {
    std::vector<double> q(samples);
    parallel_for(samples, workers, [&](std::size_t i) {
        Rng rng(derive_key(seed, {kKs, static_cast<std::uint64_t>(n), i}));
        q[i] = sample_sphere(static_cast<std::size_t>(n), 1.0, rng).symbols[0];
    });
    std::sort(q.begin(), q.end());
    double d = 0.0;
    const double count = static_cast<double>(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const double f = sphere_coord_cdf(q[i], n);
        d = std::max({d, static_cast<double>(i + 1) / count - f, f - static_cast<double>(i) / count});
    }
    // Kolmogorov 1% critical value with Stephens' finite-sample correction.
    const double root = std::sqrt(count);
    const double critical = 1.6276 / (root + 0.12 + 0.11 / root);
    return {"sphere_coordinate_ks_n" + std::to_string(n), d <= critical, d, critical, samples,
            "KS distance vs 1% critical value"};
}

CheckResult check_inner_product_moments(std::int64_t n, std::uint64_t samples, std::uint64_t seed,
                                        unsigned workers) {
    std::vector<double> q(samples);
    parallel_for(samples, workers, [&](std::size_t i) {
        Rng rng(derive_key(seed, {kMoments, static_cast<std::uint64_t>(n), i}));
        const auto x1 = sample_sphere(static_cast<std::size_t>(n), 1.0, rng);
        const auto x2 = sample_sphere(static_cast<std::size_t>(n), 2.0, rng);
        q[i] = inner_product_q(x1, x2);
    });
    double mean = 0.0;
    for (double v : q) mean += v;
    mean /= static_cast<double>(samples);
    double var = 0.0;
    for (double v : q) var += (v - mean) * (v - mean);
    var /= static_cast<double>(samples - 1);
    const bool ok = std::abs(mean) <= 0.01 && std::abs(var - 1.0) <= 0.05;
    return {"inner_product_moments_n" + std::to_string(n), ok, std::max(std::abs(mean) / 0.01, std::abs(var - 1.0) / 0.05),
            1.0, samples, fmt("mean=", mean) + fmt(" var=", var)};
}

CheckResult check_pairwise_inner_products(int users, std::int64_t n, std::uint64_t samples, std::uint64_t seed,
                                          unsigned workers) {
    if (users < 3) throw std::invalid_argument("check_pairwise_inner_products: need at least 3 users");
    const std::size_t pairs = static_cast<std::size_t>(users * (users - 1) / 2);
    std::vector<double> q(samples * pairs);
    parallel_for(samples, workers, [&](std::size_t i) {
        Rng rng(derive_key(seed, {kPairwise, static_cast<std::uint64_t>(n), i}));
        std::vector<SphericalCodeword> x;
        for (int u = 0; u < users; ++u) x.push_back(sample_sphere(static_cast<std::size_t>(n), 1.0, rng));
        std::size_t p = 0;
        for (int a = 0; a < users; ++a)
            for (int b = a + 1; b < users; ++b) q[i * pairs + p++] = inner_product_q(x[a], x[b]);
    });
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> data(
        q.data(), static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(pairs));
    const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(samples - 1);
    double worst = 0.0;
    for (Eigen::Index a = 0; a < cov.rows(); ++a)
        for (Eigen::Index b = a + 1; b < cov.cols(); ++b)
            worst = std::max(worst, std::abs(cov(a, b) / std::sqrt(cov(a, a) * cov(b, b))));
    return {"pairwise_inner_product_correlation_K" + std::to_string(users) + "_n" + std::to_string(n), worst < 0.02,
            worst, 0.02, samples, "largest |correlation| between pairwise inner products"};
}

double normal_tv_quadrature(double mu1, double var1, double mu2, double var2) {
    const double s_max = std::sqrt(std::max(var1, var2));
    const double s_min = std::sqrt(std::min(var1, var2));
    const double a = std::min(mu1, mu2) - 14.0 * s_max;
    const double b = std::max(mu1, mu2) + 14.0 * s_max;
    const auto intervals = static_cast<std::size_t>(std::min(4e6, std::ceil((b - a) / (s_min / 400.0))));
    return 0.5 * abs_integral([&](double x) { return normal_density(x, mu1, var1) - normal_density(x, mu2, var2); }, a,
                              b, intervals);
}

double sphere_coord_tv_quadrature(std::int64_t n) {
    const double edge = std::sqrt(static_cast<double>(n));
    const double inside =
        abs_integral([&](double q) { return sphere_coord_pdf(q, n) - gaussian_pdf(q); }, -edge, edge, 400000);
    return 0.5 * (inside + 2.0 * gaussian_q(edge));
}

CheckResult check_gaussian_tv(int pairs, std::uint64_t seed) {
    Rng rng(derive_key(seed, kGaussTv));
    int violations = 0;
    double tightest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < pairs; ++i) {
        const double mu1 = 4.0 * rng.uniform() - 2.0, mu2 = 4.0 * rng.uniform() - 2.0;
        const double var1 = std::exp(std::log(0.1) + std::log(100.0) * rng.uniform());
        const double var2 = std::exp(std::log(0.1) + std::log(100.0) * rng.uniform());
        const double bound = tv_gaussian_bound(Eigen::VectorXd::Constant(1, mu1), Eigen::MatrixXd::Constant(1, 1, var1),
                                               Eigen::VectorXd::Constant(1, mu2), Eigen::MatrixXd::Constant(1, 1, var2));
        const double tv = normal_tv_quadrature(mu1, var1, mu2, var2);
        if (bound < tv) ++violations;
        tightest = std::min(tightest, bound - tv);
    }
    return {"gaussian_tv_bound", violations == 0, static_cast<double>(violations), 0.0,
            static_cast<std::uint64_t>(pairs), fmt("smallest bound - tv = ", tightest)};
}

CheckResult check_sphere_tv(std::int64_t n) {
    const double bound = stam_bound(n, 1);
    const double tv = sphere_coord_tv_quadrature(n);
    const double cap = 8.0 / static_cast<double>(n);
    return {"sphere_coordinate_tv_n" + std::to_string(n), tv <= bound && bound <= cap, bound, cap, 0,
            fmt("tv=", tv) + fmt(" bound=", bound)};
}

CheckResult check_mac_decoder(int instances, std::int64_t n, std::uint64_t messages, std::uint64_t seed) {
    MacConfig cfg;
    cfg.n = n;
    cfg.powers = PowerAllocation({1.0, 2.0});
    cfg.messages = {messages, messages};
    int disagreements = 0, ties = 0;
    for (int i = 0; i < instances; ++i) {
        Rng rng(derive_key(seed, {kMacOracle, static_cast<std::uint64_t>(i)}));
        const auto books = generate_codebooks(cfg, rng.next_u64());
        const std::uint64_t m1 = rng.uniform_index(messages), m2 = rng.uniform_index(messages);
        std::vector<std::span<const double>> sent{books[0].row(m1), books[1].row(m2)};
        const auto y = apply_channel(sent, static_cast<std::size_t>(n), &rng);

        // log p(y | x1, x2) for every pair, Gaussian noise of unit variance
        double best = -std::numeric_limits<double>::infinity(), second = best;
        std::vector<std::uint64_t> arg{0, 0};
        for (std::uint64_t a = 0; a < messages; ++a)
            for (std::uint64_t b = 0; b < messages; ++b) {
                double ll = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
                for (std::size_t k = 0; k < y.size(); ++k) {
                    const double r = y[k] - books[0].row(a)[k] - books[1].row(b)[k];
                    ll -= 0.5 * r * r;
                }
                if (ll > best) {
                    second = best;
                    best = ll;
                    arg = {a, b};
                } else if (ll > second) {
                    second = ll;
                }
            }
        if (best - second <= 1e-9 * (1.0 + std::abs(best))) {
            ++ties;
            continue;
        }
        if (decode_mac_ml(books, y) != arg) ++disagreements;
    }
    return {"mac_decoder_oracle", disagreements == 0, static_cast<double>(disagreements), 0.0,
            static_cast<std::uint64_t>(instances), "near-ties skipped: " + std::to_string(ties)};
}

CheckResult check_rac_decoder(int instances, std::int64_t n, std::uint64_t messages, int k, std::uint64_t seed) {
    if (k < 1 || k > 3) throw std::invalid_argument("check_rac_decoder: k must be 1..3");
    int disagreements = 0, ties = 0;
    const std::size_t len = static_cast<std::size_t>(n);
    for (int i = 0; i < instances; ++i) {
        Rng rng(derive_key(seed, {kRacOracle, static_cast<std::uint64_t>(i)}));
        const std::size_t ends[] = {len / 2, len};
        const auto book = Codebook::concatenated(messages, ends, 1.0, rng.next_u64());
        std::vector<double> y(len);
        for (int u = 0; u < k; ++u) {
            const auto x = book.row(rng.uniform_index(messages));
            for (std::size_t j = 0; j < len; ++j) y[j] += x[j];
        }
        for (double& v : y) v += rng.normal();

        // brute force over strictly increasing k-lists by nested loops
        double best = -std::numeric_limits<double>::infinity(), second = best;
        std::vector<std::uint64_t> arg;
        std::vector<std::uint64_t> list(static_cast<std::size_t>(k));
        auto consider = [&] {
            double ll = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                double r = y[j];
                for (auto m : list) r -= book.row(m)[j];
                ll -= 0.5 * r * r;
            }
            if (ll > best) {
                second = best;
                best = ll;
                arg = list;
            } else if (ll > second) {
                second = ll;
            }
        };
        for (list[0] = 0; list[0] < messages; ++list[0]) {
            if (k == 1) { consider(); continue; }
            for (list[1] = list[0] + 1; list[1] < messages; ++list[1]) {
                if (k == 2) { consider(); continue; }
                for (list[2] = list[1] + 1; list[2] < messages; ++list[2]) consider();
            }
        }
        if (best - second <= 1e-9 * (1.0 + std::abs(best))) {
            ++ties;
            continue;
        }
        if (decode_rac_list(book, y, k) != arg) ++disagreements;
    }
    return {"rac_decoder_oracle", disagreements == 0, static_cast<double>(disagreements), 0.0,
            static_cast<std::uint64_t>(instances), "near-ties skipped: " + std::to_string(ties)};
}

CheckResult check_dispersion_consistency(int pairs, std::uint64_t seed) {
    Rng rng(derive_key(seed, kDispersion));
    double worst = 0.0;
    for (int i = 0; i < pairs; ++i) {
        const double p1 = 0.1 + 9.9 * rng.uniform(), p2 = 0.1 + 9.9 * rng.uniform();
        const auto general = dispersion_matrix(PowerAllocation({p1, p2}));
        const Eigen::Matrix3d explicit_form = dispersion_matrix_two_user(p1, p2);
        worst = std::max(worst, (general.entries - explicit_form).cwiseAbs().maxCoeff());
    }
    return {"dispersion_matrix_two_user", worst <= 1e-12, worst, 1e-12, static_cast<std::uint64_t>(pairs),
            "largest entrywise difference"};
}

std::vector<CheckResult> run_verify_suite(const VerifyOptions& o) {
    std::vector<CheckResult> out;
    for (std::int64_t n : {50, 200})
        for (double t : {0.5, 1.0, 2.0}) {
            auto r = check_chi2_tails(n, t, o.samples, o.seed, o.workers);
            out.insert(out.end(), r.begin(), r.end());
        }
    // the fixed moment tolerances are sized for at least 10^5 pairs
    const std::uint64_t moment_pairs = std::max<std::uint64_t>(o.samples, 100000);
    for (std::int64_t n : {16, 64, 256}) {
        out.push_back(check_sphere_ks(n, o.samples, o.seed, o.workers));
        out.push_back(check_inner_product_moments(n, moment_pairs, o.seed, o.workers));
    }
    out.push_back(check_pairwise_inner_products(3, 128, o.samples, o.seed, o.workers));
    out.push_back(check_gaussian_tv(100, o.seed));
    for (std::int64_t n : {10, 50, 200}) out.push_back(check_sphere_tv(n));
    out.push_back(check_mac_decoder(1000, 8, 4, o.seed));
    out.push_back(check_rac_decoder(1000, 16, 8, 2, o.seed));
    out.push_back(check_dispersion_consistency(50, o.seed));
    return out;
}

}  // namespace fbl
