// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Reference computations (explicit matrices, brute-force decoders,
// quadrature, goodness-of-fit statistics) live in this file and only call the
// library for the quantity under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "fbl/dispersion.hpp"
#include "fbl/gaussian_region.hpp"
#include "fbl/mac_sim.hpp"
#include "fbl/parallel.hpp"
#include "fbl/rac_sim.hpp"
#include "fbl/rng.hpp"
#include "fbl/specfun.hpp"
#include "fbl/sphere.hpp"

using namespace fbl;

namespace {

constexpr std::uint64_t kSeed = 20240611;

struct Outcome {
    bool passed = true;
    std::string detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            passed = false;
            if (detail.size() < 400) detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------- references

double v_ref(double p) { return p * (p + 2.0) / (2.0 * (1.0 + p) * (1.0 + p)); }

Eigen::Matrix3d two_user_ref(double p1, double p2) {
    const double s = p1 + p2;
    Eigen::Matrix3d m;
    m(0, 0) = v_ref(p1);
    m(1, 1) = v_ref(p2);
    m(0, 1) = m(1, 0) = 0.5 * p1 * p2 / ((1 + p1) * (1 + p2));
    m(0, 2) = m(2, 0) = 0.5 * p1 * (s + 2.0) / ((1 + p1) * (1 + s));
    m(1, 2) = m(2, 1) = 0.5 * p2 * (s + 2.0) / ((1 + p2) * (1 + s));
    m(2, 2) = v_ref(s) + p1 * p2 / ((1 + s) * (1 + s));
    return m;
}

double sphere_density_ref(double q, std::int64_t n) {
    const double nd = static_cast<double>(n);
    if (q * q >= nd) return 0.0;
    const double log_c = std::lgamma(nd / 2) - std::lgamma((nd - 1) / 2) - 0.5 * std::log(nd * std::numbers::pi);
    return std::exp(log_c + 0.5 * (nd - 3) * std::log1p(-q * q / nd));
}

double normal_density(double x, double mu, double var) {
    return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2 * std::numbers::pi * var);
}

// Composite Simpson rule of 0.5 |f - g| on [a, b].
template <class F, class G>
double tv_simpson(F f, G g, double a, double b, int intervals) {
    const double h = (b - a) / intervals;
    double sum = 0.0;
    for (int i = 0; i <= intervals; ++i) {
        const double x = a + i * h;
        const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * std::abs(f(x) - g(x));
    }
    return 0.5 * sum * h / 3.0;
}

std::vector<std::uint64_t> brute_force_mac(const std::vector<Codebook>& cbs, const std::vector<double>& y,
                                           double& margin) {
    std::vector<std::uint64_t> best;
    double best_ll = -std::numeric_limits<double>::infinity(), second = best_ll;
    for (std::uint64_t a = 0; a < cbs[0].messages(); ++a)
        for (std::uint64_t b = 0; b < cbs[1].messages(); ++b) {
            double ll = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) {
                const double r = y[j] - cbs[0].row(a)[j] - cbs[1].row(b)[j];
                ll -= 0.5 * r * r;
            }
            if (ll > best_ll) {
                second = best_ll;
                best_ll = ll;
                best = {a, b};
            } else if (ll > second) {
                second = ll;
            }
        }
    margin = best_ll - second;
    return best;
}

std::vector<std::uint64_t> brute_force_pairs(const Codebook& cb, const std::vector<double>& y, double& margin) {
    std::vector<std::uint64_t> best;
    double best_ll = -std::numeric_limits<double>::infinity(), second = best_ll;
    for (std::uint64_t a = 0; a < cb.messages(); ++a)
        for (std::uint64_t b = a + 1; b < cb.messages(); ++b) {
            double ll = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) {
                const double r = y[j] - cb.row(a)[j] - cb.row(b)[j];
                ll -= 0.5 * r * r;
            }
            if (ll > best_ll) {
                second = best_ll;
                best_ll = ll;
                best = {a, b};
            } else if (ll > second) {
                second = ll;
            }
        }
    margin = best_ll - second;
    return best;
}

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return d;
}

// ---------------------------------------------------------------- criteria

Outcome dispersion_consistency() {
    Outcome o;
    Rng rng(derive_key(kSeed, 1));
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double p1 = 0.1 + 9.9 * rng.uniform(), p2 = 0.1 + 9.9 * rng.uniform();
        const auto general = dispersion_matrix(PowerAllocation({p1, p2})).entries;
        worst = std::max(worst, (general - Eigen::MatrixXd(two_user_ref(p1, p2))).cwiseAbs().maxCoeff());
    }
    o.require(worst <= 1e-12, "max entry difference " + fmt("%.3g", worst));
    o.detail = "50 pairs, max |diff| = " + fmt("%.3g", worst) + (o.passed ? "" : "; " + o.detail);
    return o;
}

Outcome symmetric_formula_consistency(unsigned workers) {
    Outcome o;
    Rng rng(derive_key(kSeed, 2));
    int agreed = 0;
    for (int k : {1, 2, 3}) {
        for (int i = 0; i < 10; ++i) {
            const std::int64_t n = 2000 + static_cast<std::int64_t>(rng.uniform_index(18001));
            const double eps = 0.01 + 0.19 * rng.uniform();
            const double p = 1.0 + 9.0 * rng.uniform();
            const auto pa = PowerAllocation::symmetric(k, p);
            const auto rt = RateTuple::symmetric(k, achievable_logM_symmetric(n, eps, k, p));
            const auto z = region_threshold(n, pa, rt, 0.0);
            const OrthantEstimator est(dispersion_matrix(pa).entries, 1000000, rng.next_u64(), workers);
            const auto prob = est.probability(z, 0.999);
            if (prob.contains(1.0 - eps))
                ++agreed;
            else
                o.require(false, "k=" + std::to_string(k) + " n=" + std::to_string(n) + " eps=" + fmt("%.4f", eps) +
                                     " P=" + fmt("%.3f", p) + ": P[Z<=z]=" + fmt("%.5f", prob.point) + " +- " +
                                     fmt("%.5f", prob.half_width));
        }
    }
    o.detail = std::to_string(agreed) + "/30 points with 1-eps inside the 99.9% CI" + (o.passed ? "" : "; " + o.detail);
    return o;
}

Outcome decoder_oracles() {
    Outcome o;
    int mac_disagree = 0, mac_ties = 0, rac_disagree = 0, rac_ties = 0;
    for (std::uint64_t inst = 0; inst < 1000; ++inst) {
        Rng rng(derive_key(kSeed, {3, 0, inst}));
        std::vector<Codebook> cbs{Codebook::spherical(4, 8, 1.0, rng.next_u64()),
                                  Codebook::spherical(4, 8, 1.0, rng.next_u64())};
        const std::vector<std::span<const double>> sent{cbs[0].row(rng.uniform_index(4)), cbs[1].row(rng.uniform_index(4))};
        const auto y = apply_channel(sent, 8, &rng);
        double margin = 0.0;
        const auto expected = brute_force_mac(cbs, y, margin);
        if (margin < 1e-9) {
            ++mac_ties;
            continue;
        }
        mac_disagree += decode_mac_ml(cbs, y) != expected;
    }
    for (std::uint64_t inst = 0; inst < 1000; ++inst) {
        Rng rng(derive_key(kSeed, {3, 1, inst}));
        const std::vector<std::size_t> ends{10, 16};
        const auto cb = Codebook::concatenated(8, ends, 1.0, rng.next_u64());
        std::vector<double> y(16);
        for (auto& v : y) v = rng.normal();
        for (int i = 0; i < 2; ++i) {
            const auto m = rng.uniform_index(8);
            for (std::size_t j = 0; j < 16; ++j) y[j] += cb.row(m)[j];
        }
        double margin = 0.0;
        const auto expected = brute_force_pairs(cb, y, margin);
        if (margin < 1e-9) {
            ++rac_ties;
            continue;
        }
        rac_disagree += decode_rac_list(cb, y, 2) != expected;
    }
    o.require(mac_disagree == 0, std::to_string(mac_disagree) + " MAC disagreements");
    o.require(rac_disagree == 0, std::to_string(rac_disagree) + " RAC disagreements");
    o.detail = "MAC " + std::to_string(mac_disagree) + " disagreements (" + std::to_string(mac_ties) + " ties), RAC " +
               std::to_string(rac_disagree) + " disagreements (" + std::to_string(rac_ties) + " ties)";
    return o;
}

struct RcuRecord {
    std::uint64_t errors;
    double rcu;
};

Outcome rcu_dominance(unsigned workers, std::vector<RcuRecord>& record) {
    Outcome o;
    Rng rng(derive_key(kSeed, 4));
    double worst_gap = -1.0;
    for (int i = 0; i < 10; ++i) {
        MacConfig cfg;
        cfg.n = 64;
        cfg.powers = PowerAllocation::symmetric(2, 1.0);
        const std::uint64_t m = rng.uniform_index(2) ? 4 : 2;
        cfg.messages = {m, m};
        cfg.trials = 10000;
        cfg.inner_samples = 1000;
        cfg.seed = rng.next_u64();
        const auto sim = simulate_mac(cfg, workers);
        const auto rcu = rcu_mc_estimate(cfg, workers);
        const double se_sim = binomial_std_error(sim.errors, sim.trials);
        const double se_rcu = rcu.half_width / normal_critical_value(rcu.confidence);
        const double gap = sim.error.point - rcu.point - 3.0 * std::hypot(se_sim, se_rcu);
        worst_gap = std::max(worst_gap, gap);
        o.require(gap <= 0.0, "M=" + std::to_string(m) + " sim " + fmt("%.5f", sim.error.point) + " > rcu " +
                                  fmt("%.5f", rcu.point) + " + 3 sigma");
        record.push_back({sim.errors, rcu.point});
    }
    o.detail = "10 configs, largest (sim - rcu - 3 sigma) = " + fmt("%.5f", worst_gap) + (o.passed ? "" : "; " + o.detail);
    return o;
}

struct DistRecord {
    std::vector<double> statistics;
    std::vector<std::uint64_t> counts;
};

Outcome distributional(unsigned workers, DistRecord& record) {
    Outcome o;
    const std::size_t samples = 100000;
    // (a) KS of the scaled first coordinate
    for (std::int64_t n : {16, 64, 256}) {
        std::vector<double> q(samples);
        parallel_for(samples, workers, [&](std::size_t i) {
            Rng rng(derive_key(kSeed, {5, 0, static_cast<std::uint64_t>(n), i}));
            const auto x = sample_sphere(static_cast<std::size_t>(n), 1.0, rng);
            q[i] = x.symbols[0];  // sqrt(n) x_1 / sqrt(nP) with P = 1
        });
        const double d = ks_statistic(q, [n](double t) { return sphere_coord_cdf(t, n); });
        const double crit = 1.6276 / (std::sqrt(static_cast<double>(samples)) + 0.12 + 0.11 / std::sqrt(static_cast<double>(samples)));
        record.statistics.push_back(d);
        o.require(d < crit, "KS n=" + std::to_string(n) + " D=" + fmt("%.5f", d));
    }
    // (b) inner-product moments
    {
        const std::int64_t n = 64;
        std::vector<double> q(samples);
        parallel_for(samples, workers, [&](std::size_t i) {
            Rng a(derive_key(kSeed, {5, 1, i, 0})), b(derive_key(kSeed, {5, 1, i, 1}));
            q[i] = inner_product_q(sample_sphere(n, 1.0, a), sample_sphere(n, 1.0, b));
        });
        double sum = 0.0, sum2 = 0.0;
        for (double v : q) sum += v;
        const double mean = sum / samples;
        for (double v : q) sum2 += (v - mean) * (v - mean);
        const double var = sum2 / (samples - 1);
        record.statistics.push_back(mean);
        record.statistics.push_back(var);
        o.require(std::abs(mean) <= 0.01, "inner-product mean " + fmt("%.5f", mean));
        o.require(std::abs(var - 1.0) <= 0.05, "inner-product variance " + fmt("%.5f", var));
    }
    // (c) chi-squared tails
    for (std::int64_t n : {50, 200}) {
        std::vector<double> chi2(samples);
        parallel_for(samples, workers, [&](std::size_t i) {
            Rng rng(derive_key(kSeed, {5, 2, static_cast<std::uint64_t>(n), i}));
            double s = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                const double z = rng.normal();
                s += z * z;
            }
            chi2[i] = s;
        });
        for (double t : {0.5, 1.0, 2.0}) {
            const double up = 2 * std::sqrt(n * t) + 2 * t, down = 2 * std::sqrt(n * t);
            std::uint64_t hi = 0, lo = 0;
            for (double s : chi2) {
                hi += s - n >= up;
                lo += s - n <= -down;
            }
            const auto bound = chi2_tail_bounds(n, t);
            record.counts.push_back(hi);
            record.counts.push_back(lo);
            for (auto [hits, b] : {std::pair{hi, bound.upper_dev_bound}, std::pair{lo, bound.lower_dev_bound}}) {
                const double p = static_cast<double>(hits) / samples;
                o.require(p <= b + 3.0 * binomial_std_error(hits, samples),
                          "chi2 n=" + std::to_string(n) + " t=" + fmt("%g", t) + " freq " + fmt("%.5f", p));
            }
        }
    }
    if (o.passed) o.detail = "KS n in {16,64,256}, inner-product moments, 12 chi-squared tails";
    return o;
}

Outcome tv_soundness() {
    Outcome o;
    Rng rng(derive_key(kSeed, 6));
    int violations = 0;
    for (int i = 0; i < 100; ++i) {
        const double mu1 = -2 + 4 * rng.uniform(), mu2 = -2 + 4 * rng.uniform();
        const double v1 = std::exp(std::log(0.1) + std::log(100.0) * rng.uniform());
        const double v2 = std::exp(std::log(0.1) + std::log(100.0) * rng.uniform());
        const double lo = std::min(mu1 - 12 * std::sqrt(v1), mu2 - 12 * std::sqrt(v2));
        const double hi = std::max(mu1 + 12 * std::sqrt(v1), mu2 + 12 * std::sqrt(v2));
        const double tv = tv_simpson([&](double x) { return normal_density(x, mu1, v1); },
                                     [&](double x) { return normal_density(x, mu2, v2); }, lo, hi, 200000);
        const double bound = tv_gaussian_bound(Eigen::VectorXd::Constant(1, mu1), Eigen::MatrixXd::Constant(1, 1, v1),
                                               Eigen::VectorXd::Constant(1, mu2), Eigen::MatrixXd::Constant(1, 1, v2));
        violations += bound < tv;
    }
    o.require(violations == 0, std::to_string(violations) + " Gaussian pairs with bound < TV");
    std::string sphere;
    for (std::int64_t n : {10, 50, 200}) {
        const double edge = std::sqrt(static_cast<double>(n));
        // the sphere density is supported on [-sqrt n, sqrt n]; add the normal tails outside
        const double inside = tv_simpson([n](double q) { return sphere_density_ref(q, n); },
                                         [](double q) { return normal_density(q, 0, 1); }, -edge, edge, 400000);
        const double tv = inside + gaussian_q(edge);
        const double bound = stam_bound(n, 1);
        o.require(bound >= tv, "n=" + std::to_string(n) + " bound " + fmt("%.6f", bound) + " < TV " + fmt("%.6f", tv));
        o.require(bound <= 8.0 / n, "n=" + std::to_string(n) + " bound above 8/n");
        sphere += " n=" + std::to_string(n) + ": " + fmt("%.5f", tv) + " <= " + fmt("%.5f", bound);
    }
    o.detail = "100 Gaussian pairs, 0 violations;" + sphere + (o.passed ? "" : "; " + o.detail);
    return o;
}

Outcome rac_protocol(unsigned workers, std::vector<ClassCounts>& record) {
    Outcome o;
    RacScheduleRequest req;
    req.users = 2;
    req.power = 1.0;
    req.eps = {0.1, 0.1, 0.1};
    req.messages = 256;
    const auto s = build_rac_schedule(req);
    const auto b = simulate_rac(s, 100000, derive_key(kSeed, 7), {CodebookMode::fixed, false, false}, workers);
    const auto kappa = kappa_table(2, 1.0);
    std::string summary;
    for (const auto& k : b.per_k) {
        const auto& c = k.counts;
        record.push_back(c);
        o.require(c.power_violations == 0, "k=" + std::to_string(k.k) + " power violations");
        const double rep = static_cast<double>(c.repetition) / c.epochs;
        const double rep_ref = k.k * (k.k - 1) / (2.0 * 256);
        o.require(std::abs(rep - rep_ref) <= 3.0 * binomial_std_error(c.repetition, c.epochs),
                  "k=" + std::to_string(k.k) + " repetition " + fmt("%.5f", rep));
        const double wt = static_cast<double>(c.wrong_time) / c.epochs;
        const double bound = wrong_time_bound(s, k.k, kappa);
        o.require(wt <= bound + 3.0 * binomial_std_error(c.wrong_time, c.epochs),
                  "k=" + std::to_string(k.k) + " wrong-time " + fmt("%.5f", wt));
        if (k.k == 0) {
            const double fa = static_cast<double>(c.errors()) / c.epochs;
            o.require(fa <= s.eps[0] + 3.0 * binomial_std_error(c.errors(), c.epochs), "false alarm " + fmt("%.5f", fa));
        }
        summary += " k=" + std::to_string(k.k) + ": rep " + fmt("%.5f", rep) + " (ref " + fmt("%.5f", rep_ref) +
                   "), wrong-time " + fmt("%.5f", wt) + " (bound " + fmt("%.4g", bound) + ")";
    }
    o.detail = "n_t = " + std::to_string(s.decode_times[0]) + "," + std::to_string(s.decode_times[1]) + "," +
               std::to_string(s.decode_times[2]) + ";" + summary + (o.passed ? "" : "; " + o.detail);
    return o;
}

void report(int id, const char* name, const Outcome& o, double seconds, bool& all) {
    std::printf("criterion %d %-34s %s  (%.1f s) %s\n", id, name, o.passed ? "PASS" : "FAIL", seconds, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.passed;
}

template <class F>
Outcome timed(F f, double& seconds) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o = f();
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return o;
}

}  // namespace

int main() {
    const unsigned workers = default_workers();
    const unsigned other = workers == 1 ? 3 : 1;
    bool all = true;
    double t = 0.0;
    std::printf("workers: %u (rerun with %u)\n", workers, other);

    report(1, "dispersion-matrix consistency", timed([] { return dispersion_consistency(); }, t), t, all);
    report(2, "symmetric-formula consistency", timed([&] { return symmetric_formula_consistency(workers); }, t), t, all);
    report(3, "decoder oracle equivalence", timed([] { return decoder_oracles(); }, t), t, all);
    std::vector<RcuRecord> rcu_a, rcu_b;
    report(4, "RCU dominance", timed([&] { return rcu_dominance(workers, rcu_a); }, t), t, all);
    DistRecord dist_a, dist_b;
    report(5, "distributional checks", timed([&] { return distributional(workers, dist_a); }, t), t, all);
    report(6, "TV-bound soundness", timed([] { return tv_soundness(); }, t), t, all);
    std::vector<ClassCounts> rac_a, rac_b;
    report(7, "RAC protocol properties", timed([&] { return rac_protocol(workers, rac_a); }, t), t, all);

    const auto determinism = [&] {
        Outcome o;
        rcu_dominance(other, rcu_b);
        distributional(other, dist_b);
        rac_protocol(other, rac_b);
        bool same_rcu = rcu_a.size() == rcu_b.size();
        for (std::size_t i = 0; same_rcu && i < rcu_a.size(); ++i)
            same_rcu = rcu_a[i].errors == rcu_b[i].errors && rcu_a[i].rcu == rcu_b[i].rcu;
        o.require(same_rcu, "MAC error counts or RCU estimates differ");
        o.require(dist_a.statistics == dist_b.statistics && dist_a.counts == dist_b.counts,
                  "distributional statistics differ");
        o.require(rac_a == rac_b, "RAC class counts differ");
        if (o.passed) o.detail = "criteria 4, 5 and 7 identical with " + std::to_string(other) + " workers";
        return o;
    };
    report(8, "determinism across worker counts", timed(determinism, t), t, all);

    std::printf("%s\n", all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
    return all ? 0 : 1;
}
