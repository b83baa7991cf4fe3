#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fbl/gaussian_region.hpp"
#include "fbl/parallel.hpp"
#include "fbl/rac_sim.hpp"
#include "fbl/specfun.hpp"

using namespace fbl;

namespace {

RacSchedule standard_schedule(int users, std::uint64_t messages) {
    RacScheduleRequest req;
    req.users = users;
    req.power = 1.0;
    req.eps.assign(static_cast<std::size_t>(users) + 1, 0.1);
    req.messages = messages;
    return build_rac_schedule(req);
}

// Hand-built schedule with widely spaced times.
RacSchedule spread_schedule() {
    RacSchedule s;
    s.users = 2;
    s.power = 1.0;
    s.messages = 16;
    s.decode_times = {200, 400, 2000};
    s.thresholds = {0.5, 0.5, 0.5};
    s.eps = {0.1, 0.1, 0.1};
    return s;
}

// Wrong-time bound written out term by term.
double wrong_time_ref(const RacSchedule& s, int k, const std::vector<double>& kappa) {
    const double P = s.power;
    if (k == 0) return 2 * kappa[0] * std::exp(-s.decode_times[0] * s.thresholds[0] * s.thresholds[0] / 8);
    const double denom = 8 * (1 + k * P) * (1 + k * P);
    double b = 2 * kappa[0] * std::exp(-s.decode_times[0] * std::pow(k * P - s.thresholds[0], 2) / denom);
    for (int t = 1; t <= k; ++t) {
        double prod = 1;
        for (int j = 1; j <= t; ++j) prod *= kappa[j - 1];
        const double d = t < k ? (k - t) * P - s.thresholds[t] : s.thresholds[t];
        b += 2 * prod * std::exp(-s.decode_times[t] * d * d / denom);
    }
    return b;
}

struct ListOracle {
    std::vector<std::uint64_t> list;
    double margin;
};

// Exhaustive likelihood over strictly increasing lists on the prefix.
ListOracle brute_force_list(const Codebook& cb, const std::vector<double>& y, int t) {
    const std::size_t M = cb.messages(), n = y.size();
    std::vector<std::uint64_t> list(t);
    for (int i = 0; i < t; ++i) list[i] = i;
    double best = -std::numeric_limits<double>::infinity(), second = best;
    std::vector<std::uint64_t> arg;
    while (true) {
        double ll = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double r = y[j];
            for (auto m : list) r -= cb.row(m)[j];
            ll -= 0.5 * r * r;
        }
        if (ll > best) {
            second = best;
            best = ll;
            arg = list;
        } else if (ll > second) {
            second = ll;
        }
        int i = t - 1;
        while (i >= 0 && list[i] == M - t + i) --i;
        if (i < 0) break;
        ++list[i];
        for (int j = i + 1; j < t; ++j) list[j] = list[j - 1] + 1;
    }
    return {arg, best - second};
}

}  // namespace

TEST_CASE("minimum blocklengths") {
    CHECK(min_blocklength(1, std::log(1024.0), 0.1, 1.0, 0.0, 1000000) == 28);
    CHECK(min_blocklength(1, std::log(256.0), 0.1, 1.0, 0.0, 1000000) == 23);
    CHECK(min_blocklength(2, std::log(1024.0), 0.1, 1.0, 0.0, 1000000) == 32);
    CHECK(min_blocklength(2, std::log(256.0), 0.1, 1.0, 0.0, 1000000) == 27);
    for (int k : {1, 2, 3}) {
        for (double logm : {2.0, 10.0, 50.0}) {
            const auto n = min_blocklength(k, logm, 0.05, 0.8, 0.0, 10000000);
            CHECK(achievable_logM_symmetric(n, 0.05, k, 0.8) * k >= k * logm - 1e-9);
            if (n > 2) CHECK(achievable_logM_symmetric(n - 1, 0.05, k, 0.8) < logm);
        }
    }
    CHECK_THROWS_AS(min_blocklength(2, 1e6, 0.1, 1.0, 0.0, 1000), ScheduleError);
}

TEST_CASE("schedule for two users at M = 1024 and M = 256") {
    for (std::uint64_t m : {1024u, 256u}) {
        const auto s = standard_schedule(2, m);
        CHECK(s.decode_times == std::vector<std::int64_t>{191, 192, 193});
        CHECK(s.thresholds[0] == doctest::Approx(0.49997086188893876).epsilon(1e-12));
        CHECK(s.thresholds[1] == 0.5);
        CHECK(s.thresholds[2] == 0.5);
        CHECK(s.messages == m);
    }
    CHECK(standard_schedule(1, 256).decode_times == std::vector<std::int64_t>{191, 192});
}

TEST_CASE("schedule invariants") {
    for (int users : {1, 2, 3, 4}) {
        for (double p : {0.3, 1.0, 5.0}) {
            RacScheduleRequest req;
            req.users = users;
            req.power = p;
            req.eps.assign(static_cast<std::size_t>(users) + 1, 0.05);
            req.messages = 1u << 12;
            const auto s = build_rac_schedule(req);
            CHECK_NOTHROW(s.validate());
            for (int t = 1; t <= users; ++t) {
                CHECK(s.decode_times[t] > s.decode_times[t - 1]);
                CHECK(s.thresholds[t] == p / 2);
                CHECK(s.decode_times[t] >= min_blocklength(t, s.log_messages(), 0.05, p, 0.0, 10000000));
            }
            CHECK(s.thresholds[0] <= std::min(p, 1.0) / 2 + 1e-15);
            CHECK(s.decode_times[0] >= min_n0(s.decode_times[1], p, 0.05).n0);
            CHECK(2 * kappa1(p) * std::exp(-s.decode_times[0] * s.thresholds[0] * s.thresholds[0] / 8) <=
                  0.05 * (1 + 1e-12));
            const auto ends = s.block_ends();
            CHECK(ends.size() == static_cast<std::size_t>(users));
            CHECK(ends.back() == static_cast<std::size_t>(s.decode_times.back()));
        }
    }
}

TEST_CASE("schedule from a target last decoding time") {
    RacScheduleRequest req;
    req.users = 2;
    req.eps = {0.1, 0.1, 0.1};
    req.target_last_time = 40;
    const auto s = build_rac_schedule(req);
    CHECK(s.messages == static_cast<std::uint64_t>(std::floor(std::exp(achievable_logM_symmetric(40, 0.1, 2, 1.0)))));
    CHECK(s.messages == 7242);
    CHECK(s.decode_times.back() <= 600);
}

TEST_CASE("infeasible schedules are rejected") {
    RacScheduleRequest req;
    req.users = 2;
    req.eps = {0.1, 1e-12, 1e-12};
    req.messages = std::uint64_t{1} << 40;
    req.max_blocklength = 150;
    CHECK_THROWS_AS(build_rac_schedule(req), ScheduleError);
    req.messages.reset();
    req.target_last_time = 600;
    req.max_blocklength = 10'000'000;
    CHECK_THROWS_AS(build_rac_schedule(req), ScheduleError);
    req = {};
    req.users = 2;
    req.eps = {0.1, 0.1};
    req.messages = 8;
    CHECK_THROWS_AS(build_rac_schedule(req), ScheduleError);
    auto s = spread_schedule();
    s.decode_times = {200, 200, 300};
    CHECK_THROWS_AS(s.validate(), ScheduleError);
    s = spread_schedule();
    s.decode_times = {10, 400, 2000};
    CHECK_THROWS_AS(s.validate(), ScheduleError);
}

TEST_CASE("power gate examples") {
    const auto s = spread_schedule();
    CHECK_FALSE(power_typical(std::vector<double>(200, 0.0), 0, s));
    for (int t = 0; t <= 2; ++t) {
        const auto nt = static_cast<std::size_t>(s.decode_times[t]);
        const std::vector<double> y(nt, std::sqrt(1.0 + t * s.power));
        CHECK(power_typical(y, t, s));
        const std::vector<double> loud(nt, std::sqrt(1.6 + t * s.power));
        CHECK_FALSE(power_typical(loud, t, s));
    }
    CHECK_THROWS_AS(power_typical(std::vector<double>(199, 1.0), 0, s), std::invalid_argument);
}

TEST_CASE("noiseless epochs decode the transmitted list at the right time") {
    const RacSimulator sim(spread_schedule(), 3, {CodebookMode::ensemble, true, false});
    for (int k = 1; k <= 2; ++k) {
        for (std::uint64_t e = 0; e < 100; ++e) {
            const auto o = sim.run_epoch(k, e);
            if (o.error == ErrorClass::repetition) continue;
            CHECK(o.stop_index == k);
            CHECK(o.error == ErrorClass::none);
        }
    }
}

TEST_CASE("no-transmitter epochs rarely raise a false alarm") {
    const auto s = standard_schedule(2, 256);
    const auto b = simulate_rac(s, 20000, 4, {CodebookMode::fixed, false, false});
    const auto& zero = b.per_k[0].counts;
    const double p = static_cast<double>(zero.errors()) / zero.epochs;
    CHECK(p <= s.eps[0] + 3.0 * binomial_std_error(zero.errors(), zero.epochs));
    CHECK(zero.repetition == 0);
    CHECK(zero.wrong_message == 0);
}

TEST_CASE("repetition frequency matches k(k-1)/(2M)") {
    const auto s = standard_schedule(2, 8);
    const RacSimulator sim(s, 5, {CodebookMode::fixed, false, false});
    const std::uint64_t epochs = 1000000;
    std::vector<std::uint64_t> hits(epochs / 1000, 0);
    parallel_for(hits.size(), default_workers(), [&](std::size_t chunk) {
        for (std::uint64_t e = chunk * 1000; e < (chunk + 1) * 1000; ++e)
            hits[chunk] += sim.run_epoch(2, e).error == ErrorClass::repetition;
    });
    std::uint64_t total = 0;
    for (auto h : hits) total += h;
    const double p = static_cast<double>(total) / epochs;
    CHECK(std::abs(p - 1.0 / 8.0) <= 3.0 * binomial_std_error(total, epochs));
}

TEST_CASE("power constraint holds on every prefix and wrong-time rate respects the bound") {
    const auto s = standard_schedule(2, 256);
    const auto kappa = kappa_table(2, 1.0);
    for (auto mode : {CodebookMode::fixed, CodebookMode::ensemble}) {
        const auto b = simulate_rac(s, mode == CodebookMode::fixed ? 5000 : 1000, 6, {mode, false, false});
        for (int k = 0; k <= 2; ++k) {
            const auto& c = b.per_k[k].counts;
            CHECK(c.power_violations == 0);
            const double rate = static_cast<double>(c.wrong_time) / c.epochs;
            CHECK(rate <= wrong_time_bound(s, k, kappa) + 3.0 * binomial_std_error(c.wrong_time, c.epochs));
        }
    }
}

TEST_CASE("wrong-time bound values") {
    const auto k1 = standard_schedule(1, 256);
    const auto table1 = kappa_table(1, 1.0);
    CHECK(wrong_time_bound(k1, 0, table1) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(wrong_time_bound(k1, 1, table1) == doctest::Approx(17.504237899803455132).epsilon(1e-12));
    const auto k2 = standard_schedule(2, 256);
    const auto table2 = kappa_table(2, 1.0);
    CHECK(wrong_time_bound(k2, 2, table2) == doctest::Approx(60.659362467856274631).epsilon(1e-12));
    const auto spread = spread_schedule();
    for (int k = 0; k <= 2; ++k)
        CHECK(wrong_time_bound(spread, k, table2) == doctest::Approx(wrong_time_ref(spread, k, table2.values)).epsilon(1e-13));
}

TEST_CASE("wrong-time bound decays with each decoding time") {
    const auto table = kappa_table(2, 1.0);
    auto base = spread_schedule();
    base.thresholds = {0.3, 0.3, 0.3};
    for (int k = 1; k <= 2; ++k) {
        const double b0 = wrong_time_bound(base, k, table);
        for (int t = 0; t <= k; ++t) {
            auto longer = base;
            longer.decode_times[t] += 100;
            CHECK(wrong_time_bound(longer, k, table) < b0);
        }
    }
    // k = 1 bound vanishes as n grows
    auto huge = base;
    huge.decode_times = {100000, 200000, 300000};
    CHECK(wrong_time_bound(huge, 1, table) < 1e-100);
}

TEST_CASE("kappa table for three or more users") {
    CHECK_THROWS_AS(kappa_table(3, 1.0), RacConfigError);
    const std::vector<double> overrides{3.5, 4.5};
    const auto t = kappa_table(4, 1.0, overrides);
    CHECK(t.values == std::vector<double>{kappa1(1.0), kappa2(1.0, 1.0), 3.5, 4.5});
    CHECK_FALSE(t.placeholder);
    const auto p = kappa_table(3, 2.0, {}, true);
    CHECK(p.placeholder);
    CHECK(p.values[2] == kappa2(2.0, 2.0));
    const std::vector<double> bad{-1.0};
    CHECK_THROWS_AS(kappa_table(3, 1.0, bad), RacConfigError);
}

TEST_CASE("list decoder matches the exhaustive likelihood decoder") {
    const std::size_t n = 16;
    int compared = 0;
    for (std::uint64_t inst = 0; inst < 1000; ++inst) {
        Rng rng(derive_key(77, inst));
        const std::vector<std::size_t> ends{n};
        const auto cb = Codebook::concatenated(8, ends, 1.0, rng.next_u64());
        const int t = 1 + static_cast<int>(inst % 2);
        std::vector<double> y(n);
        for (auto& v : y) v = rng.normal();
        for (int i = 0; i < t; ++i) {
            const auto m = rng.uniform_index(8);
            for (std::size_t j = 0; j < n; ++j) y[j] += cb.row(m)[j];
        }
        const auto oracle = brute_force_list(cb, y, t);
        if (oracle.margin < 1e-9) continue;
        ++compared;
        double margin = 0.0;
        CHECK(decode_rac_list(cb, y, t, nullptr, &margin) == oracle.list);
        CHECK(margin == doctest::Approx(oracle.margin).epsilon(1e-8));
        const auto gram = PrefixGram::compute(cb, n);
        CHECK(decode_rac_list(cb, y, t, &gram) == oracle.list);
    }
    CHECK(compared >= 990);
}

TEST_CASE("list decoder ignores the order of the transmitters") {
    const std::size_t n = 40;
    const std::vector<std::size_t> ends{20, 40};
    const auto cb = Codebook::concatenated(12, ends, 1.0, 9);
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint64_t> msgs{rng.uniform_index(12), rng.uniform_index(12), rng.uniform_index(12)};
        std::vector<double> noise(n);
        for (auto& v : noise) v = rng.normal();
        std::vector<std::uint64_t> perm = msgs;
        std::sort(perm.begin(), perm.end());
        std::vector<std::uint64_t> first;
        bool have_first = false;
        do {
            std::vector<double> y(n, 0.0);
            for (auto m : perm)
                for (std::size_t j = 0; j < n; ++j) y[j] += cb.row(m)[j];
            for (std::size_t j = 0; j < n; ++j) y[j] += noise[j];
            double margin = 0.0;
            const auto d = decode_rac_list(cb, y, 3, nullptr, &margin);
            if (!have_first) {
                first = d;
                have_first = true;
            } else if (margin > 1e-9) {
                CHECK(d == first);
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
}

TEST_CASE("a wider gate at n_k never stops fewer epochs there") {
    auto narrow = spread_schedule();
    narrow.thresholds = {0.5, 0.2, 0.1};
    auto wide = narrow;
    wide.thresholds[2] = 0.3;
    const RacSimulator a(narrow, 11), b(wide, 11);
    int narrow_stops = 0, wide_stops = 0;
    for (std::uint64_t e = 0; e < 300; ++e) {
        const auto oa = a.run_epoch(2, e), ob = b.run_epoch(2, e);
        if (oa.stop_index == 2) CHECK(ob.stop_index == 2);
        narrow_stops += oa.stop_index == 2;
        wide_stops += ob.stop_index == 2;
    }
    CHECK(wide_stops >= narrow_stops);
}

TEST_CASE("epochs and summaries are reproducible") {
    const auto s = standard_schedule(2, 64);
    const RacSimulator a(s, 12, {CodebookMode::ensemble, false, true}), b(s, 12, {CodebookMode::ensemble, false, true});
    for (std::uint64_t e = 0; e < 20; ++e) {
        nlohmann::json ja = a.run_epoch(2, e), jb = b.run_epoch(2, e);
        CHECK(ja == jb);
    }
    std::ostringstream t1, t3;
    const auto r1 = simulate_rac(s, 500, 13, {CodebookMode::fixed, false, false}, 1, &t1);
    const auto r3 = simulate_rac(s, 500, 13, {CodebookMode::fixed, false, false}, 3, &t3);
    for (int k = 0; k <= 2; ++k) CHECK(r1.per_k[k].counts == r3.per_k[k].counts);
    const std::string lines = t1.str();
    CHECK(lines == t3.str());
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 1500);
}

TEST_CASE("error breakdown estimates") {
    ClassCounts c;
    c.epochs = 100;
    c.none = 90;
    c.repetition = 2;
    c.wrong_time = 5;
    c.wrong_message = 3;
    const auto b = ErrorBreakdown::from_counts({c});
    REQUIRE(b.per_k.size() == 1);
    CHECK(b.per_k[0].overall.point == doctest::Approx(0.1));
    CHECK(b.per_k[0].wrong_time.point == doctest::Approx(0.05));
    CHECK(c.errors() == 10);
}
