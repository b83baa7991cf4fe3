#include "fbl/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "fbl/dispersion.hpp"
#include "fbl/gaussian_region.hpp"
#include "fbl/parallel.hpp"
#include "fbl/rac_sim.hpp"
#include "fbl/verify.hpp"

namespace fbl {

const char* to_string(Mode m) {
    switch (m) {
        case Mode::rates_mac: return "rates-mac";
        case Mode::rates_rac: return "rates-rac";
        case Mode::simulate_mac: return "simulate-mac";
        case Mode::simulate_rac: return "simulate-rac";
        case Mode::verify: return "verify";
    }
    return "?";
}

std::optional<Mode> parse_mode(std::string_view text) {
    for (Mode m : {Mode::rates_mac, Mode::rates_rac, Mode::simulate_mac, Mode::simulate_rac, Mode::verify})
        if (text == to_string(m)) return m;
    return std::nullopt;
}

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view value) {
    std::vector<std::string_view> items;
    std::size_t start = 0;
    for (;;) {
        const auto comma = value.find(',', start);
        items.push_back(trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return items;
}

template <class T>
std::optional<T> parse_number(std::string_view token) {
    T value{};
    const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || end != token.data() + token.size()) return std::nullopt;
    if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(value)) return std::nullopt;
    return value;
}

// Parses one value of type T and applies `check`, which returns an error
// text or an empty string.
template <class T, class Check>
std::optional<T> parse_checked(std::string_view token, const std::string& key, const char* type_name, Check&& check,
                               std::vector<std::string>& errors) {
    const auto v = parse_number<T>(token);
    if (!v) {
        errors.push_back(key + ": expected " + type_name + ", got '" + std::string(token) + "'");
        return std::nullopt;
    }
    if (std::string problem = check(*v); !problem.empty()) {
        errors.push_back(key + ": " + problem);
        return std::nullopt;
    }
    return v;
}

template <class T, class Check>
std::vector<T> parse_list(std::string_view value, const std::string& key, const char* type_name, Check&& check,
                          std::vector<std::string>& errors) {
    std::vector<T> out;
    if (value.empty()) {
        errors.push_back(key + ": empty list");
        return out;
    }
    for (auto token : split_list(value))
        if (auto v = parse_checked<T>(token, key, type_name, check, errors)) out.push_back(*v);
    return out;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

auto no_check = [](auto) { return std::string(); };

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join(violations, "; ")), violations_(std::move(violations)) {}

ExperimentConfig parse_config(std::string_view text) {
    static const char* const known[] = {"mode",          "n",        "power",       "eps",   "messages",
                                        "users",         "trials",   "seed",        "out",   "c0",
                                        "inner_samples", "codebook", "lambda0_max", "kappa", "kappa_placeholder"};
    ExperimentConfig cfg;
    std::vector<std::string> errors;
    std::map<std::string, int, std::less<>> seen;

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            errors.push_back(where + ": expected 'key = value'");
            continue;
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            errors.push_back(where + ": unknown key '" + key + "'");
            continue;
        }
        if (auto it = seen.find(key); it != seen.end()) {
            errors.push_back(where + ": duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
            continue;
        }
        seen.emplace(key, line_no);

        if (key == "mode") {
            cfg.mode = parse_mode(value);
            if (!cfg.mode) errors.push_back("mode: unknown mode '" + std::string(value) + "'");
        } else if (key == "n") {
            cfg.n = parse_list<std::int64_t>(value, key, "integer",
                                             [](std::int64_t v) { return v >= 2 ? "" : std::string("blocklength must be >= 2"); },
                                             errors);
        } else if (key == "power") {
            cfg.power = parse_list<double>(value, key, "real",
                                           [](double v) { return v > 0.0 ? "" : std::string("power must be positive"); },
                                           errors);
        } else if (key == "eps") {
            cfg.eps = parse_list<double>(
                value, key, "real",
                [](double v) { return v > 0.0 && v < 1.0 ? "" : "probability out of range (" + format_real(v) + ")"; },
                errors);
        } else if (key == "messages") {
            cfg.messages = parse_list<std::uint64_t>(
                value, key, "integer", [](std::uint64_t v) { return v >= 1 ? "" : std::string("must be >= 1"); }, errors);
        } else if (key == "users") {
            cfg.users = parse_list<int>(
                value, key, "integer",
                [](int v) { return v >= 1 && v <= kMaxUsers ? "" : "must be in 1.." + std::to_string(kMaxUsers); }, errors);
        } else if (key == "trials" || key == "inner_samples") {
            auto& target = key == "trials" ? cfg.trials : cfg.inner_samples;
            if (auto v = parse_checked<std::uint64_t>(
                    value, key, "integer", [](std::uint64_t x) { return x >= 1 ? "" : std::string("must be >= 1"); },
                    errors))
                target = *v;
        } else if (key == "seed") {
            if (auto v = parse_checked<std::uint64_t>(value, key, "integer", no_check, errors)) cfg.seed = *v;
        } else if (key == "out") {
            if (value.empty())
                errors.push_back("out: empty path");
            else
                cfg.out = std::string(value);
        } else if (key == "c0") {
            if (auto v = parse_checked<double>(value, key, "real", no_check, errors)) cfg.c0 = *v;
        } else if (key == "codebook") {
            if (value == "ensemble")
                cfg.codebook = CodebookMode::ensemble;
            else if (value == "fixed")
                cfg.codebook = CodebookMode::fixed;
            else
                errors.push_back("codebook: expected 'ensemble' or 'fixed'");
        } else if (key == "lambda0_max") {
            if (auto v = parse_checked<double>(
                    value, key, "real", [](double x) { return x > 0.0 && x < 1.0 ? "" : std::string("must lie in (0, 1)"); },
                    errors))
                cfg.lambda0_max = *v;
        } else if (key == "kappa") {
            cfg.kappa = parse_list<double>(value, key, "real",
                                           [](double v) { return v > 0.0 ? "" : std::string("must be positive"); }, errors);
        } else if (key == "kappa_placeholder") {
            if (value == "true")
                cfg.kappa_placeholder = true;
            else if (value == "false")
                cfg.kappa_placeholder = false;
            else
                errors.push_back("kappa_placeholder: expected 'true' or 'false'");
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    if (cfg.mode) cfg.validate();
    return cfg;
}

namespace {

double binomial_count(std::uint64_t m, int t) {
    double c = 1.0;
    for (int i = 0; i < t; ++i) c = c * static_cast<double>(m - static_cast<std::uint64_t>(i)) / (i + 1);
    return c;
}

}  // namespace

void ExperimentConfig::validate() const {
    std::vector<std::string> errors;
    if (!mode) {
        errors.push_back("mode: not set");
        throw ConfigError(std::move(errors));
    }
    const char* name = to_string(*mode);
    auto require = [&](bool present, const char* key) {
        if (!present) errors.push_back(std::string(key) + ": required for " + name + " (grid is empty)");
    };
    switch (*mode) {
        case Mode::rates_mac:
            require(!users.empty(), "users");
            require(!power.empty(), "power");
            require(!eps.empty(), "eps");
            require(!n.empty(), "n");
            break;
        case Mode::simulate_mac:
            require(!users.empty(), "users");
            require(!power.empty(), "power");
            require(!n.empty(), "n");
            require(!messages.empty(), "messages");
            for (int k : users)
                for (std::uint64_t m : messages)
                    if (std::pow(static_cast<double>(m), k) > static_cast<double>(kMaxDecoderCandidates))
                        errors.push_back("messages: M=" + std::to_string(m) + " with K=" + std::to_string(k) +
                                         " exceeds the 2^24 decoder limit");
            break;
        case Mode::rates_rac:
        case Mode::simulate_rac:
            require(!users.empty(), "users");
            require(!power.empty(), "power");
            require(!eps.empty(), "eps");
            if (messages.empty() == n.empty())
                errors.push_back(std::string("messages, n: ") + name + " needs exactly one of them");
            if (*mode == Mode::simulate_rac)
                for (int k : users)
                    for (std::uint64_t m : messages)
                        for (int t = 1; t <= k; ++t)
                            if (binomial_count(m, t) > static_cast<double>(kMaxDecoderCandidates))
                                errors.push_back("messages: C(" + std::to_string(m) + ", " + std::to_string(t) +
                                                 ") exceeds the 2^24 list decoder limit");
            break;
        case Mode::verify:
            break;
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
}

std::string GridPoint::canonical(Mode mode) const {
    std::string s = to_string(mode);
    if (users) s += "|K=" + std::to_string(*users);
    if (power) s += "|P=" + format_real(*power);
    if (eps) s += "|eps=" + format_real(*eps);
    if (messages) s += "|M=" + std::to_string(*messages);
    if (n) s += "|n=" + std::to_string(*n);
    return s;
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg) {
    if (!cfg.mode) throw ConfigError({"mode: not set"});
    const Mode mode = *cfg.mode;
    if (mode == Mode::verify) return {GridPoint{}};
    const bool use_eps = mode != Mode::simulate_mac;
    const bool use_messages = !cfg.messages.empty();
    const bool use_n = !cfg.n.empty() && !((mode == Mode::rates_rac || mode == Mode::simulate_rac) && use_messages);

    std::vector<GridPoint> grid{GridPoint{}};
    auto product = [&](auto const& values, auto member) {
        std::vector<GridPoint> next;
        for (const auto& g : grid)
            for (const auto& v : values) {
                GridPoint p = g;
                p.*member = v;
                next.push_back(p);
            }
        grid = std::move(next);
    };
    product(cfg.users, &GridPoint::users);
    product(cfg.power, &GridPoint::power);
    if (use_eps) product(cfg.eps, &GridPoint::eps);
    if (use_messages) product(cfg.messages, &GridPoint::messages);
    if (use_n) product(cfg.n, &GridPoint::n);
    if (grid.empty()) throw ConfigError({"grid is empty"});
    return grid;
}

std::uint64_t point_seed(std::uint64_t master, Mode mode, const GridPoint& point) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : point.canonical(mode)) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return derive_key(master, hash);
}

std::string format_csv_row(const ResultRow& r) {
    std::string s = to_string(r.mode);
    auto field = [&s](const std::string& v) {
        s += ',';
        s += v;
    };
    field(r.n ? std::to_string(*r.n) : "");
    field(r.users ? std::to_string(*r.users) : "");
    field(r.power ? format_real(*r.power) : "");
    field(r.eps ? format_real(*r.eps) : "");
    field(r.messages ? std::to_string(*r.messages) : "");
    field(r.metric);
    field(format_real(r.value));
    field(r.ci_half_width ? format_real(*r.ci_half_width) : "");
    field(r.samples ? std::to_string(*r.samples) : "");
    field(std::to_string(r.seed));
    return s;
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) out << format_csv_row(r) << '\n';
}

nlohmann::json rows_to_json(const std::vector<ResultRow>& rows) {
    auto opt = [](const auto& o) { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
    auto real = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
        out.push_back({{"mode", to_string(r.mode)},
                       {"n", opt(r.n)},
                       {"K", opt(r.users)},
                       {"P", opt(r.power)},
                       {"eps", opt(r.eps)},
                       {"M", opt(r.messages)},
                       {"metric_name", r.metric},
                       {"value", real(r.value)},
                       {"ci_half_width", opt(r.ci_half_width)},
                       {"samples", opt(r.samples)},
                       {"seed", r.seed}});
    return out;
}

namespace {

constexpr double kLn2 = 0.69314718055994530942;
// The region boundary search integrates over 2^K - 1 dimensions.
constexpr int kMaxRayUsers = 6;

struct PointContext {
    Mode mode;
    const ExperimentConfig& cfg;
    const GridPoint& point;
    std::uint64_t seed;
    unsigned workers;
    std::ostream* trace;
    std::vector<std::string> notes;
    std::vector<ResultRow> rows;

    ResultRow base() const {
        ResultRow r;
        r.mode = mode;
        r.n = point.n;
        r.users = point.users;
        r.power = point.power;
        r.eps = point.eps;
        r.messages = point.messages;
        r.seed = seed;
        return r;
    }
    void add(ResultRow r, std::string metric, double value, std::optional<double> ci = std::nullopt,
             std::optional<std::uint64_t> samples = std::nullopt) {
        r.metric = std::move(metric);
        r.value = value;
        r.ci_half_width = ci;
        r.samples = samples;
        rows.push_back(std::move(r));
    }
    void add(std::string metric, double value, std::optional<double> ci = std::nullopt,
             std::optional<std::uint64_t> samples = std::nullopt) {
        add(base(), std::move(metric), value, ci, samples);
    }
    void add_nats(ResultRow r, const std::string& metric, double nats, std::optional<double> ci = std::nullopt,
                  std::optional<std::uint64_t> samples = std::nullopt) {
        add(r, metric + "_nats", nats, ci, samples);
        add(r, metric + "_bits", nats / kLn2, ci ? std::optional<double>(*ci / kLn2) : std::nullopt, samples);
    }
};

void run_rates_mac(PointContext& c) {
    const int K = *c.point.users;
    const double P = *c.point.power, eps = *c.point.eps;
    const std::int64_t n = *c.point.n;
    const auto pa = PowerAllocation::symmetric(K, P);
    c.add_nats(c.base(), "sum_capacity", capacity(K * P));
    const double log_m = achievable_logM_symmetric(n, eps, K, P, c.cfg.c0);
    c.add_nats(c.base(), "per_user_log_messages", log_m);
    c.add_nats(c.base(), "per_user_rate", log_m / static_cast<double>(n));
    if (K <= kMaxRayUsers) {
        const auto ray = region_boundary_on_ray(n, eps, pa, std::vector<double>(static_cast<std::size_t>(K), 1.0), c.cfg.c0,
                                                c.cfg.trials, c.seed, c.workers);
        c.add_nats(c.base(), "ray_boundary_log_messages", ray.scale, ray.tolerance, c.cfg.trials);
    } else {
        c.notes.push_back("region boundary search skipped for K > " + std::to_string(kMaxRayUsers));
    }
    if (c.point.messages) {
        const auto rt = RateTuple::symmetric(K, std::log(static_cast<double>(*c.point.messages)));
        const auto test = rate_tuple_achievable(n, eps, pa, rt, c.cfg.c0, c.cfg.trials, c.seed, c.workers);
        c.add("region_probability", test.probability.point, test.probability.half_width, test.probability.samples);
        c.add("region_target", 1.0 - eps);
    }
}

RacSchedule schedule_for(const PointContext& c) {
    RacScheduleRequest req;
    req.users = *c.point.users;
    req.power = *c.point.power;
    req.eps.assign(static_cast<std::size_t>(req.users) + 1, *c.point.eps);
    if (c.point.messages)
        req.messages = *c.point.messages;
    else
        req.target_last_time = *c.point.n;
    req.c0 = c.cfg.c0;
    if (c.cfg.lambda0_max) req.lambda0_max = *c.cfg.lambda0_max;
    return build_rac_schedule(req);
}

// Row describing decode time t of a schedule: n = n_t, K = t, M = schedule M.
ResultRow schedule_row(const PointContext& c, const RacSchedule& s, int t) {
    ResultRow r = c.base();
    r.n = s.decode_times[static_cast<std::size_t>(t)];
    r.users = t;
    r.messages = s.messages;
    return r;
}

// Wrong-time bound rows for the k whose kappa constants are available.
void add_wrong_time_bounds(PointContext& c, const RacSchedule& s) {
    const int available = s.users <= 2 ? s.users : 2 + static_cast<int>(c.cfg.kappa.size());
    const int usable = c.cfg.kappa_placeholder ? s.users : std::min(s.users, available);
    const auto table = kappa_table(std::max(1, usable), s.power, c.cfg.kappa, c.cfg.kappa_placeholder);
    for (int k = 0; k <= s.users; ++k) {
        if (k > usable) {
            c.notes.push_back("wrong_time_bound for k=" + std::to_string(k) + " needs kappa overrides");
            continue;
        }
        if (k >= 1 && !(s.thresholds[0] < k * s.power)) continue;
        const bool flagged = table.placeholder && k >= 3;
        c.add(schedule_row(c, s, k), flagged ? "wrong_time_bound_placeholder_kappa" : "wrong_time_bound",
              wrong_time_bound(s, k, table));
    }
}

void run_rates_rac(PointContext& c) {
    const auto s = schedule_for(c);
    for (int t = 0; t <= s.users; ++t) {
        const ResultRow r = schedule_row(c, s, t);
        c.add(r, "decode_time", static_cast<double>(s.decode_times[static_cast<std::size_t>(t)]));
        c.add(r, "threshold", s.thresholds[static_cast<std::size_t>(t)]);
        if (t == 0) continue;
        const auto nt = s.decode_times[static_cast<std::size_t>(t)];
        const double log_m = achievable_logM_symmetric(nt, s.eps[static_cast<std::size_t>(t)], t, s.power, s.c0);
        c.add_nats(r, "per_user_log_messages", log_m);
        c.add_nats(r, "per_user_rate", log_m / static_cast<double>(nt));
    }
    add_wrong_time_bounds(c, s);
}

void run_simulate_mac(PointContext& c) {
    MacConfig m;
    m.n = *c.point.n;
    m.powers = PowerAllocation::symmetric(*c.point.users, *c.point.power);
    m.messages.assign(static_cast<std::size_t>(*c.point.users), *c.point.messages);
    m.trials = c.cfg.trials;
    m.seed = c.seed;
    m.inner_samples = c.cfg.inner_samples;
    m.mode = c.cfg.codebook;
    const auto sim = simulate_mac(m, c.workers);
    c.add("error_probability", sim.error.point, sim.error.half_width, sim.trials);
    if (m.users() <= 3) {
        const auto rcu = rcu_mc_estimate(m, c.workers);
        c.add("rcu_bound", rcu.point, rcu.half_width, rcu.samples);
    } else {
        c.notes.push_back("rcu_bound skipped for K > 3");
    }
    c.add_nats(c.base(), "per_user_rate", std::log(static_cast<double>(*c.point.messages)) / static_cast<double>(m.n));
}

void run_simulate_rac(PointContext& c) {
    const auto s = schedule_for(c);
    std::ostringstream trace;
    RacRunOptions opts;
    opts.mode = c.cfg.codebook;
    const auto b = simulate_rac(s, c.cfg.trials, c.seed, opts, c.workers, c.trace ? &trace : nullptr);
    if (c.trace) *c.trace << trace.str();
    for (const auto& k : b.per_k) {
        const ResultRow r = schedule_row(c, s, k.k);
        const auto epochs = k.counts.epochs;
        c.add(r, "repetition_rate", k.repetition.point, k.repetition.half_width, epochs);
        c.add(r, "wrong_time_rate", k.wrong_time.point, k.wrong_time.half_width, epochs);
        c.add(r, "wrong_message_rate", k.wrong_message.point, k.wrong_message.half_width, epochs);
        c.add(r, "error_rate", k.overall.point, k.overall.half_width, epochs);
        c.add(r, "power_violations", static_cast<double>(k.counts.power_violations), std::nullopt, epochs);
        c.add(r, "repetition_reference", k.k * (k.k - 1) / (2.0 * static_cast<double>(s.messages)));
    }
    add_wrong_time_bounds(c, s);
}

bool run_verify(PointContext& c) {
    const auto checks = run_verify_suite({c.cfg.trials, c.seed, c.workers});
    bool ok = true;
    for (const auto& check : checks) {
        c.add(check.name + ".passed", check.passed ? 1.0 : 0.0, std::nullopt, check.samples);
        c.add(check.name + ".statistic", check.statistic);
        c.add(check.name + ".limit", check.limit);
        if (!check.passed) {
            ok = false;
            c.notes.push_back("FAILED " + check.name + ": " + check.detail);
        }
    }
    return ok;
}

}  // namespace

RunResult run_experiment(Mode mode, const ExperimentConfig& cfg_in, const RunOptions& options) {
    ExperimentConfig cfg = cfg_in;
    if (cfg.mode && *cfg.mode != mode)
        throw ConfigError({std::string("mode: config says ") + to_string(*cfg.mode) + " but " + to_string(mode) +
                           " was requested"});
    cfg.mode = mode;
    cfg.validate();
    const auto grid = expand_grid(cfg);

    struct Slot {
        std::vector<ResultRow> rows;
        std::vector<std::string> notes;
        std::string trace;
        bool failed = false;
    };
    std::vector<Slot> slots(grid.size());
    const unsigned outer = std::min<unsigned>(std::max(1u, options.workers), static_cast<unsigned>(grid.size()));
    const unsigned inner = grid.size() > 1 ? 1u : std::max(1u, options.workers);
    parallel_for(
        grid.size(), outer,
        [&](std::size_t i) {
            std::ostringstream trace;
            PointContext c{mode, cfg, grid[i], point_seed(cfg.seed, mode, grid[i]), inner,
                           options.trace ? &trace : nullptr, {}, {}};
            try {
                switch (mode) {
                    case Mode::rates_mac: run_rates_mac(c); break;
                    case Mode::rates_rac: run_rates_rac(c); break;
                    case Mode::simulate_mac: run_simulate_mac(c); break;
                    case Mode::simulate_rac: run_simulate_rac(c); break;
                    case Mode::verify: slots[i].failed = !run_verify(c); break;
                }
            } catch (const std::exception& e) {
                // Guard violations and infeasible points are reported per point.
                c.rows.clear();
                c.add("guard_violation", std::numeric_limits<double>::quiet_NaN());
                c.notes.push_back(e.what());
                if (mode == Mode::verify) slots[i].failed = true;
            }
            slots[i].rows = std::move(c.rows);
            slots[i].notes = std::move(c.notes);
            slots[i].trace = trace.str();
        },
        1);

    RunResult result;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        auto& slot = slots[i];
        result.rows.insert(result.rows.end(), slot.rows.begin(), slot.rows.end());
        result.verification_failed = result.verification_failed || slot.failed;
        if (options.log)
            for (const auto& note : slot.notes) *options.log << grid[i].canonical(mode) << ": " << note << '\n';
        if (options.trace) *options.trace << slot.trace;
    }
    return result;
}

}  // namespace fbl
