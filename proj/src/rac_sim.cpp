#include "fbl/rac_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "fbl/dispersion.hpp"
#include "fbl/gaussian_region.hpp"
#include "fbl/parallel.hpp"
#include "fbl/specfun.hpp"

namespace fbl {

namespace {

constexpr std::uint64_t kEpochTag = 1;
constexpr std::uint64_t kFixedCodebookTag = 2;
// Relative slack for the prefix power check; the blocks are normalized in
// extended precision and then rounded to double.
constexpr double kPowerSlack = 1e-9;

double binomial(std::uint64_t m, int t) {
    double c = 1.0;
    for (int i = 0; i < t; ++i) c = c * static_cast<double>(m - static_cast<std::uint64_t>(i)) / (i + 1);
    return c;
}

}  // namespace

double RacSchedule::log_messages() const { return std::log(static_cast<double>(messages)); }

std::vector<std::size_t> RacSchedule::block_ends() const {
    std::vector<std::size_t> ends;
    for (std::size_t t = 1; t < decode_times.size(); ++t) ends.push_back(static_cast<std::size_t>(decode_times[t]));
    return ends;
}

void RacSchedule::validate() const {
    if (users < 1) throw ScheduleError("schedule: K must be >= 1");
    if (!(power > 0.0) || !std::isfinite(power)) throw ScheduleError("schedule: power must be positive");
    if (messages < 1) throw ScheduleError("schedule: M must be >= 1");
    const auto slots = static_cast<std::size_t>(users) + 1;
    if (decode_times.size() != slots || thresholds.size() != slots || eps.size() != slots)
        throw ScheduleError("schedule: need K + 1 decode times, thresholds and eps targets");
    if (decode_times[0] < 1) throw ScheduleError("schedule: n_0 must be >= 1");
    for (std::size_t t = 1; t < slots; ++t)
        if (decode_times[t] <= decode_times[t - 1]) throw ScheduleError("schedule: decode times must increase strictly");
    for (std::size_t t = 0; t < slots; ++t) {
        const double lam = thresholds[t];
        if (!(lam > 0.0) || !(lam < 1.0 + static_cast<double>(t) * power))
            throw ScheduleError("schedule: lambda_" + std::to_string(t) + " outside (0, 1 + tP)");
        if (!(eps[t] > 0.0 && eps[t] < 1.0)) throw ScheduleError("schedule: eps targets must lie in (0, 1)");
    }
    if (decode_times[0] < min_n0(decode_times[1], power, eps[0]).n0)
        throw ScheduleError("schedule: n_0 below the minimum for n_1");
}

std::int64_t min_blocklength(int k, double log_m, double eps, double power, double c0, std::int64_t max_n) {
    if (k < 1) throw std::invalid_argument("min_blocklength: k must be >= 1");
    auto slack = [&](std::int64_t n) { return achievable_logM_symmetric(n, eps, k, power, c0) - log_m; };
    // As a function of s = sqrt(n) the slack is k^-1 (C s^2 - a s + log s + c0)
    // minus a constant, which increases for s >= a / (2C).
    const double kp = k * power;
    const double a = std::sqrt(dispersion_v(kp) + cross_dispersion(k, power)) * gaussian_q_inv(eps);
    const double s_turn = a / (2.0 * capacity(kp));
    std::int64_t lo = 2;
    if (s_turn > std::sqrt(2.0)) {
        const double turn = std::ceil(s_turn * s_turn);
        if (turn > static_cast<double>(max_n))
            throw ScheduleError("min_blocklength: required blocklength exceeds " + std::to_string(max_n));
        lo = static_cast<std::int64_t>(turn);
    }
    if (slack(lo) >= 0.0) {
        while (lo > 2 && slack(lo - 1) >= 0.0) --lo;
        return lo;
    }
    std::int64_t hi = lo;
    while (slack(hi) < 0.0) {
        if (hi >= max_n) {
            std::ostringstream msg;
            msg << "min_blocklength: k=" << k << " log M=" << log_m << " eps=" << eps
                << " needs a blocklength above " << max_n;
            throw ScheduleError(msg.str());
        }
        lo = hi;
        hi = std::min(max_n, hi * 2);
    }
    // slack(lo) < 0 <= slack(hi)
    while (hi - lo > 1) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        (slack(mid) >= 0.0 ? hi : lo) = mid;
    }
    return hi;
}

RacSchedule build_rac_schedule(const RacScheduleRequest& request) {
    const int K = request.users;
    if (K < 1) throw ScheduleError("schedule: K must be >= 1");
    if (!(request.power > 0.0)) throw ScheduleError("schedule: power must be positive");
    if (request.eps.size() != static_cast<std::size_t>(K) + 1)
        throw ScheduleError("schedule: need eps_0 .. eps_K");
    for (double e : request.eps)
        if (!(e > 0.0 && e < 1.0)) throw ScheduleError("schedule: eps targets must lie in (0, 1)");
    const double P = request.power;

    RacSchedule s;
    s.users = K;
    s.power = P;
    s.eps = request.eps;
    s.c0 = request.c0;
    if (request.messages) {
        s.messages = *request.messages;
    } else if (request.target_last_time) {
        const double per_user = achievable_logM_symmetric(*request.target_last_time, request.eps[K], K, P, request.c0);
        if (per_user > 62.0 * std::log(2.0))
            throw ScheduleError("schedule: n_K=" + std::to_string(*request.target_last_time) +
                                " supports more than 2^62 messages");
        const double m = std::floor(std::exp(per_user));
        if (m < 2.0)
            throw ScheduleError("schedule: n_K=" + std::to_string(*request.target_last_time) +
                                " supports fewer than 2 messages");
        s.messages = static_cast<std::uint64_t>(m);
    } else {
        throw ScheduleError("schedule: give either M or a target n_K");
    }
    if (s.messages < 2) throw ScheduleError("schedule: M must be >= 2");

    std::vector<std::int64_t> times(static_cast<std::size_t>(K) + 1, 0);
    for (int k = 1; k <= K; ++k)
        times[static_cast<std::size_t>(k)] =
            min_blocklength(k, s.log_messages(), request.eps[static_cast<std::size_t>(k)], P, request.c0,
                            request.max_blocklength);

    const double lambda_cap = request.lambda0_max > 0.0 ? request.lambda0_max : 0.5 * std::min(P, 1.0);
    if (!(lambda_cap < 1.0)) throw ScheduleError("schedule: lambda_0 limit must be < 1");
    const double log_ratio = std::log(2.0 * kappa1(P) / request.eps[0]);
    // Smallest n_0 with sqrt(8 log(2 kappa1 / eps0) / n_0) <= lambda_cap.
    const auto n0_for_cap = static_cast<std::int64_t>(std::ceil(8.0 * log_ratio / (lambda_cap * lambda_cap)));
    for (;;) {
        times[0] = std::max<std::int64_t>({1, n0_for_cap, min_n0(times[1], P, request.eps[0]).n0});
        if (times[0] < times[1]) break;
        times[1] = times[0] + 1;
    }
    for (int k = 2; k <= K; ++k)
        times[static_cast<std::size_t>(k)] =
            std::max(times[static_cast<std::size_t>(k)], times[static_cast<std::size_t>(k) - 1] + 1);
    if (times.back() > request.max_blocklength) throw ScheduleError("schedule: n_K exceeds the blocklength limit");

    s.decode_times = times;
    s.thresholds.assign(static_cast<std::size_t>(K) + 1, 0.5 * P);
    s.thresholds[0] = lambda0_for(times[0], P, request.eps[0]);
    s.validate();
    return s;
}

bool power_typical(std::span<const double> y_prefix, int t, const RacSchedule& schedule) {
    if (t < 0 || t > schedule.users) throw std::invalid_argument("power_typical: t out of range");
    const auto expected = static_cast<std::size_t>(schedule.decode_times[static_cast<std::size_t>(t)]);
    if (y_prefix.size() != expected) throw std::invalid_argument("power_typical: prefix length must equal n_t");
    const double normalized = squared_norm(y_prefix) / static_cast<double>(expected);
    return std::abs(normalized - (1.0 + t * schedule.power)) <= schedule.thresholds[static_cast<std::size_t>(t)];
}

PrefixGram PrefixGram::compute(const Codebook& cb, std::size_t prefix) {
    if (prefix > cb.length()) throw std::invalid_argument("PrefixGram: prefix longer than codewords");
    PrefixGram g;
    g.prefix = prefix;
    g.messages = cb.messages();
    g.values.assign(g.messages * g.messages, 0.0);
    for (std::size_t a = 0; a < g.messages; ++a) {
        const auto xa = cb.row(a).first(prefix);
        for (std::size_t b = a; b < g.messages; ++b) {
            const double v = dot(xa, cb.row(b).first(prefix));
            g.values[a * g.messages + b] = v;
            g.values[b * g.messages + a] = v;
        }
    }
    return g;
}

std::vector<std::uint64_t> decode_rac_list(const Codebook& cb, std::span<const double> y_prefix, int t,
                                           const PrefixGram* gram, double* margin) {
    const std::size_t prefix = y_prefix.size();
    const std::uint64_t M = cb.messages();
    if (t < 1) throw std::invalid_argument("decode_rac_list: list length must be >= 1");
    if (prefix == 0 || prefix > cb.length()) throw std::invalid_argument("decode_rac_list: bad prefix length");
    if (static_cast<std::uint64_t>(t) > M) throw std::invalid_argument("decode_rac_list: list longer than codebook");
    if (binomial(M, t) > static_cast<double>(kMaxDecoderCandidates))
        throw SizeError("decode_rac_list: list space exceeds 2^24");
    if (gram && (gram->prefix != prefix || gram->messages != M))
        throw std::invalid_argument("decode_rac_list: Gram matrix does not match");

    PrefixGram local;
    if (!gram && t >= 2) {
        local = PrefixGram::compute(cb, prefix);
        gram = &local;
    }
    std::vector<double> own(M);
    for (std::uint64_t a = 0; a < M; ++a) {
        const auto xa = cb.row(a).first(prefix);
        const double norm2 = gram ? (*gram)(a, a) : squared_norm(xa);
        own[a] = dot(y_prefix, xa) - 0.5 * norm2;
    }

    const auto len = static_cast<std::size_t>(t);
    std::vector<std::uint64_t> current(len), best(len);
    std::vector<double> partial(len + 1, 0.0);
    double best_value = -std::numeric_limits<double>::infinity();
    double runner_up = -std::numeric_limits<double>::infinity();
    auto descend = [&](auto&& self, std::size_t level, std::uint64_t first) -> void {
        if (level == len) {
            const double value = partial[len];
            if (value > best_value) {
                runner_up = best_value;
                best_value = value;
                best = current;
            } else if (value > runner_up) {
                runner_up = value;
            }
            return;
        }
        // leave room for the remaining levels
        const std::uint64_t last = M - (len - level - 1);
        for (std::uint64_t a = first; a < last; ++a) {
            current[level] = a;
            double value = partial[level] + own[a];
            for (std::size_t j = 0; j < level; ++j) value -= (*gram)(current[j], a);
            partial[level + 1] = value;
            self(self, level + 1, a + 1);
        }
    };
    descend(descend, 0, 0);
    if (margin) *margin = std::isfinite(runner_up) ? best_value - runner_up : std::numeric_limits<double>::infinity();
    return best;
}

const char* to_string(ErrorClass c) {
    switch (c) {
        case ErrorClass::none: return "none";
        case ErrorClass::repetition: return "repetition";
        case ErrorClass::wrong_time: return "wrong_time";
        case ErrorClass::wrong_message: return "wrong_message";
    }
    return "?";
}

void to_json(nlohmann::json& j, const TrialOutcome& o) {
    j = nlohmann::json{{"k_active", o.k_active},
                       {"transmitted", o.transmitted},
                       {"decoded", o.decoded},
                       {"error", to_string(o.error)},
                       {"feedback", o.feedback},
                       {"power_violation", o.power_violation}};
    j["stop_index"] = o.stop_index ? nlohmann::json(*o.stop_index) : nlohmann::json(nullptr);
    if (!o.gates.empty()) {
        auto& gates = j["gates"] = nlohmann::json::array();
        for (const auto& g : o.gates)
            gates.push_back({{"t", g.t}, {"time", g.time}, {"power", g.normalized_power}, {"typical", g.typical}});
    }
}

RacSimulator::RacSimulator(RacSchedule schedule, std::uint64_t seed, RacRunOptions options)
    : schedule_(std::move(schedule)), seed_(seed), options_(options) {
    schedule_.validate();
    block_ends_ = schedule_.block_ends();
    for (int t = 1; t <= schedule_.users; ++t)
        if (binomial(schedule_.messages, t) > static_cast<double>(kMaxDecoderCandidates))
            throw SizeError("RacSimulator: list space C(M, " + std::to_string(t) + ") exceeds 2^24");
    const double doubles = static_cast<double>(schedule_.messages) * static_cast<double>(block_ends_.back());
    if (doubles > static_cast<double>(kMaxTrialDoubles)) throw SizeError("RacSimulator: codebook exceeds memory guard");
    if (options_.mode == CodebookMode::fixed) {
        fixed_ = Codebook::concatenated(schedule_.messages, block_ends_, schedule_.power,
                                        derive_key(seed_, kFixedCodebookTag));
        const double gram_doubles = static_cast<double>(schedule_.messages) * static_cast<double>(schedule_.messages);
        if (schedule_.users >= 2 && gram_doubles * schedule_.users <= static_cast<double>(kMaxTrialDoubles))
            for (int t = 1; t <= schedule_.users; ++t)
                grams_.push_back(PrefixGram::compute(*fixed_, block_ends_[static_cast<std::size_t>(t) - 1]));
    }
}

TrialOutcome RacSimulator::run_epoch(int k_active, std::uint64_t epoch) const {
    const RacSchedule& s = schedule_;
    if (k_active < 0 || k_active > s.users) throw std::invalid_argument("run_epoch: k_active out of range");
    Rng rng(derive_key(seed_, {kEpochTag, static_cast<std::uint64_t>(k_active), epoch}));
    const std::size_t n_last = block_ends_.back();

    TrialOutcome out;
    out.k_active = k_active;
    for (int i = 0; i < k_active; ++i) out.transmitted.push_back(rng.uniform_index(s.messages));

    // Ensemble mode draws a fresh codebook key per epoch; rows are generated
    // on demand so only the decoder pays for the full codebook.
    const std::uint64_t codebook_key = rng.next_u64();
    std::vector<double> y(n_last, 0.0);
    std::vector<double> row(n_last);
    for (std::uint64_t m : out.transmitted) {
        std::span<const double> x;
        if (fixed_) {
            x = fixed_->row(m);
        } else {
            Rng row_rng(derive_key(codebook_key, m));
            std::size_t begin = 0;
            for (std::size_t end : block_ends_) {
                fill_sphere(std::span<double>(row).subspan(begin, end - begin), s.power, row_rng);
                begin = end;
            }
            x = row;
        }
        for (int j = 1; j <= k_active; ++j) {
            const std::size_t nj = block_ends_[static_cast<std::size_t>(j) - 1];
            if (squared_norm(x.first(nj)) > static_cast<double>(nj) * s.power * (1.0 + kPowerSlack))
                out.power_violation = true;
        }
        for (std::size_t i = 0; i < n_last; ++i) y[i] += x[i];
    }
    if (!options_.noiseless)
        for (double& v : y) v += rng.normal();

    std::optional<Codebook> ensemble_book;
    long double energy = 0.0L;
    std::size_t accumulated = 0;
    // Without noise the expected received power loses its unit noise term.
    const double noise_power = options_.noiseless ? 0.0 : 1.0;
    for (int t = 0; t <= s.users; ++t) {
        const auto nt = static_cast<std::size_t>(s.decode_times[static_cast<std::size_t>(t)]);
        for (; accumulated < nt; ++accumulated) energy += static_cast<long double>(y[accumulated]) * y[accumulated];
        const double normalized = static_cast<double>(energy / static_cast<long double>(nt));
        const bool typical =
            std::abs(normalized - (noise_power + t * s.power)) <= s.thresholds[static_cast<std::size_t>(t)];
        if (options_.trace) out.gates.push_back({t, static_cast<std::int64_t>(nt), normalized, typical});
        out.feedback.push_back(typical);
        if (!typical) continue;
        out.stop_index = t;
        if (t >= 1) {
            const Codebook* book = fixed_ ? &*fixed_ : nullptr;
            if (!book) {
                ensemble_book = Codebook::concatenated(s.messages, block_ends_, s.power, codebook_key);
                book = &*ensemble_book;
            }
            const PrefixGram* gram = grams_.empty() ? nullptr : &grams_[static_cast<std::size_t>(t) - 1];
            out.decoded = decode_rac_list(*book, std::span<const double>(y).first(nt), t, gram);
        }
        break;
    }

    auto sorted = out.transmitted;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        out.error = ErrorClass::repetition;
    else if (out.stop_index != k_active)
        out.error = ErrorClass::wrong_time;
    else if (out.decoded != sorted)
        out.error = ErrorClass::wrong_message;
    return out;
}

void ClassCounts::add(const TrialOutcome& o) {
    ++epochs;
    switch (o.error) {
        case ErrorClass::none: ++none; break;
        case ErrorClass::repetition: ++repetition; break;
        case ErrorClass::wrong_time: ++wrong_time; break;
        case ErrorClass::wrong_message: ++wrong_message; break;
    }
    power_violations += o.power_violation;
}

ClassCounts& ClassCounts::operator+=(const ClassCounts& other) {
    epochs += other.epochs;
    none += other.none;
    repetition += other.repetition;
    wrong_time += other.wrong_time;
    wrong_message += other.wrong_message;
    power_violations += other.power_violations;
    return *this;
}

ErrorBreakdown ErrorBreakdown::from_counts(const std::vector<ClassCounts>& counts) {
    ErrorBreakdown b;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto& c = counts[k];
        b.per_k.push_back({static_cast<int>(k), c, proportion_estimate(c.repetition, c.epochs),
                           proportion_estimate(c.wrong_time, c.epochs),
                           proportion_estimate(c.wrong_message, c.epochs), proportion_estimate(c.errors(), c.epochs)});
    }
    return b;
}

ErrorBreakdown simulate_rac(const RacSchedule& schedule, std::uint64_t epochs_per_k, std::uint64_t seed,
                            RacRunOptions options, unsigned workers, std::ostream* trace) {
    if (trace) options.trace = true;
    const RacSimulator sim(schedule, seed, options);
    std::vector<ClassCounts> counts(static_cast<std::size_t>(schedule.users) + 1);
    for (int k = 0; k <= schedule.users; ++k) {
        // Per-epoch slots keep the merge order fixed for any worker count.
        std::vector<ErrorClass> classes(epochs_per_k);
        std::vector<unsigned char> violations(epochs_per_k);
        std::vector<std::string> lines(trace ? epochs_per_k : 0);
        parallel_for(epochs_per_k, workers, [&](std::size_t e) {
            const auto o = sim.run_epoch(k, e);
            classes[e] = o.error;
            violations[e] = o.power_violation;
            if (trace) lines[e] = nlohmann::json(o).dump();
        });
        auto& c = counts[static_cast<std::size_t>(k)];
        for (std::size_t e = 0; e < epochs_per_k; ++e) {
            TrialOutcome summary;
            summary.error = classes[e];
            summary.power_violation = violations[e];
            c.add(summary);
            if (trace) *trace << lines[e] << '\n';
        }
    }
    return ErrorBreakdown::from_counts(counts);
}

KappaTable kappa_table(int users, double power, std::span<const double> overrides, bool allow_placeholder) {
    if (users < 1) throw std::invalid_argument("kappa_table: need at least one user");
    KappaTable table;
    table.values.push_back(kappa1(power));
    if (users >= 2) table.values.push_back(kappa2(power, power));
    for (int j = 3; j <= users; ++j) {
        const auto idx = static_cast<std::size_t>(j - 3);
        if (idx < overrides.size()) {
            if (!(overrides[idx] > 0.0)) throw RacConfigError("kappa override must be positive");
            table.values.push_back(overrides[idx]);
        } else if (allow_placeholder) {
            table.values.push_back(table.values[1]);
            table.placeholder = true;
        } else {
            throw RacConfigError("kappa(" + std::to_string(j) + ", P) has no closed form; supply an override");
        }
    }
    return table;
}

double wrong_time_bound(const RacSchedule& s, int k, const KappaTable& kappa) {
    if (k < 0 || k > s.users) throw std::invalid_argument("wrong_time_bound: k out of range");
    if (kappa.values.size() < static_cast<std::size_t>(std::max(k, 1)))
        throw RacConfigError("wrong_time_bound: kappa table too short");
    const double P = s.power;
    const double lam0 = s.thresholds[0];
    const double n0 = static_cast<double>(s.decode_times[0]);
    if (k == 0) return 2.0 * kappa.values[0] * std::exp(-n0 * lam0 * lam0 / 8.0);
    if (!(lam0 < k * P)) throw std::domain_error("wrong_time_bound: needs lambda_0 < kP");
    const double scale = 8.0 * (1.0 + k * P) * (1.0 + k * P);
    double bound = 2.0 * kappa.values[0] * std::exp(-n0 * (k * P - lam0) * (k * P - lam0) / scale);
    double product = 1.0;
    for (int t = 1; t <= k; ++t) {
        product *= kappa.values[static_cast<std::size_t>(t) - 1];
        const double lam = s.thresholds[static_cast<std::size_t>(t)];
        const double d = t < k ? std::max(0.0, (k - t) * P - lam) : lam;
        const double nt = static_cast<double>(s.decode_times[static_cast<std::size_t>(t)]);
        bound += 2.0 * product * std::exp(-nt * d * d / scale);
    }
    return bound;
}

void to_json(nlohmann::json& j, const RacSchedule& s) {
    j = nlohmann::json{{"users", s.users},          {"power", s.power},           {"messages", s.messages},
                       {"decode_times", s.decode_times}, {"thresholds", s.thresholds}, {"eps", s.eps},
                       {"c0", s.c0}};
}

}  // namespace fbl
