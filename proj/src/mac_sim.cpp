#include "fbl/mac_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fbl/parallel.hpp"
#include "fbl/specfun.hpp"

namespace fbl {

namespace {

// Stream tags under the master seed.
constexpr std::uint64_t kTrialTag = 1;
constexpr std::uint64_t kFixedCodebookTag = 2;
constexpr std::uint64_t kRcuTag = 3;

}  // namespace

void MacConfig::validate() const {
    if (n < 2) throw std::invalid_argument("MacConfig: blocklength must be >= 2");
    if (static_cast<int>(messages.size()) != users())
        throw std::invalid_argument("MacConfig: need one message count per user");
    std::uint64_t candidates = 1;
    std::uint64_t codebook_doubles = 0;
    std::uint64_t gram_doubles = 0;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const std::uint64_t m = messages[i];
        if (m < 1) throw std::invalid_argument("MacConfig: message counts must be >= 1");
        if (candidates > kMaxDecoderCandidates / m)
            throw SizeError("MacConfig: message tuple space exceeds decoder limit 2^24");
        candidates *= m;
        codebook_doubles += m * static_cast<std::uint64_t>(n);
        for (std::size_t j = i + 1; j < messages.size(); ++j) gram_doubles += m * messages[j];
    }
    if (codebook_doubles + gram_doubles > kMaxTrialDoubles) throw SizeError("MacConfig: memory guard exceeded");
    if (trials < 1) throw std::invalid_argument("MacConfig: trials must be >= 1");
}

std::vector<Codebook> generate_codebooks(const MacConfig& cfg, std::uint64_t key) {
    std::vector<Codebook> books;
    books.reserve(static_cast<std::size_t>(cfg.users()));
    for (int i = 0; i < cfg.users(); ++i)
        books.push_back(Codebook::spherical(cfg.messages[static_cast<std::size_t>(i)], static_cast<std::size_t>(cfg.n),
                                            cfg.powers[i], derive_key(key, static_cast<std::uint64_t>(i))));
    return books;
}

std::vector<double> apply_channel(std::span<const std::span<const double>> codewords, std::size_t n, Rng* noise) {
    std::vector<double> y(n, 0.0);
    for (auto cw : codewords) {
        if (cw.size() != n) throw std::invalid_argument("apply_channel: codeword length mismatch");
        for (std::size_t i = 0; i < n; ++i) y[i] += cw[i];
    }
    if (noise)
        for (double& v : y) v += noise->normal();
    return y;
}

std::vector<std::uint64_t> decode_mac_ml(std::span<const Codebook> codebooks, std::span<const double> y,
                                         double* margin) {
    const std::size_t users = codebooks.size();
    if (users == 0) throw std::invalid_argument("decode_mac_ml: no codebooks");
    std::uint64_t candidates = 1;
    for (const auto& cb : codebooks) {
        if (cb.length() != y.size()) throw std::invalid_argument("decode_mac_ml: codeword length mismatch");
        if (cb.messages() == 0) throw std::invalid_argument("decode_mac_ml: empty codebook");
        if (candidates > kMaxDecoderCandidates / cb.messages()) throw SizeError("decode_mac_ml: tuple space too large");
        candidates *= cb.messages();
    }

    // own[i][m] = <y, x_i(m)> - ||x_i(m)||^2 / 2
    std::vector<std::vector<double>> own(users);
    for (std::size_t i = 0; i < users; ++i) {
        own[i].resize(codebooks[i].messages());
        for (std::size_t m = 0; m < codebooks[i].messages(); ++m) {
            const auto x = codebooks[i].row(m);
            own[i][m] = dot(y, x) - 0.5 * squared_norm(x);
        }
    }
    // cross[i][j] (i < j) = <x_i(a), x_j(b)>, row-major over (a, b)
    std::vector<std::vector<std::vector<double>>> cross(users, std::vector<std::vector<double>>(users));
    for (std::size_t i = 0; i < users; ++i)
        for (std::size_t j = i + 1; j < users; ++j) {
            auto& g = cross[i][j];
            g.resize(codebooks[i].messages() * codebooks[j].messages());
            for (std::size_t a = 0; a < codebooks[i].messages(); ++a)
                for (std::size_t b = 0; b < codebooks[j].messages(); ++b)
                    g[a * codebooks[j].messages() + b] = dot(codebooks[i].row(a), codebooks[j].row(b));
        }

    std::vector<std::uint64_t> current(users, 0), best(users, 0);
    std::vector<double> partial(users + 1, 0.0);
    double best_value = -std::numeric_limits<double>::infinity();
    double runner_up = -std::numeric_limits<double>::infinity();

    // Depth-first enumeration in lexicographic order; partial[i + 1] holds the
    // statistic restricted to users 0..i.
    auto descend = [&](auto&& self, std::size_t level) -> void {
        if (level == users) {
            const double value = partial[users];
            if (value > best_value) {
                runner_up = best_value;
                best_value = value;
                best = current;
            } else if (value > runner_up) {
                runner_up = value;
            }
            return;
        }
        for (std::uint64_t m = 0; m < codebooks[level].messages(); ++m) {
            current[level] = m;
            double value = partial[level] + own[level][m];
            for (std::size_t j = 0; j < level; ++j)
                value -= cross[j][level][current[j] * codebooks[level].messages() + m];
            partial[level + 1] = value;
            self(self, level + 1);
        }
    };
    descend(descend, 0);
    if (margin) *margin = std::isfinite(runner_up) ? best_value - runner_up : std::numeric_limits<double>::infinity();
    return best;
}

MacTrialResult run_mac_trial(const MacConfig& cfg, std::uint64_t index, const std::vector<Codebook>* fixed) {
    Rng rng(derive_key(cfg.seed, {kTrialTag, index}));
    std::vector<Codebook> fresh;
    const std::vector<Codebook>* books = fixed;
    if (cfg.mode == CodebookMode::ensemble || !books) {
        fresh = generate_codebooks(cfg, rng.next_u64());
        books = &fresh;
    }
    MacTrialResult result;
    std::vector<std::span<const double>> sent;
    for (int i = 0; i < cfg.users(); ++i) {
        const std::uint64_t m = rng.uniform_index(cfg.messages[static_cast<std::size_t>(i)]);
        result.transmitted.push_back(m);
        sent.push_back((*books)[static_cast<std::size_t>(i)].row(m));
    }
    const auto y = apply_channel(sent, static_cast<std::size_t>(cfg.n), cfg.noiseless ? nullptr : &rng);
    result.decoded = decode_mac_ml(*books, y, &result.margin);
    result.error = result.decoded != result.transmitted;
    return result;
}

MacSimResult simulate_mac(const MacConfig& cfg, unsigned workers) {
    cfg.validate();
    std::vector<Codebook> fixed;
    if (cfg.mode == CodebookMode::fixed) fixed = generate_codebooks(cfg, derive_key(cfg.seed, kFixedCodebookTag));
    std::vector<unsigned char> errors(cfg.trials, 0);
    parallel_for(cfg.trials, workers, [&](std::size_t t) {
        errors[t] = run_mac_trial(cfg, t, cfg.mode == CodebookMode::fixed ? &fixed : nullptr).error;
    });
    MacSimResult out;
    out.trials = cfg.trials;
    for (unsigned char e : errors) out.errors += e;
    out.error = proportion_estimate(out.errors, out.trials);
    return out;
}

double single_user_tail(double power, std::int64_t n, double w_norm, double threshold) {
    const double nd = static_cast<double>(n);
    if (w_norm <= 0.0) return 0.5 * nd * power + threshold <= 0.0 ? 1.0 : 0.0;
    // <w, Xbar> = ||w|| sqrt(nP) U, U the first coordinate of a unit sphere
    // point, and sqrt(n) U follows the sphere-coordinate law.
    const double q = (threshold + 0.5 * nd * power) / (w_norm * std::sqrt(power));
    return sphere_coord_sf(q, n);
}

EstimateWithCI replaced_users_tail_mc(std::span<const double> powers, std::int64_t n, double w_norm,
                                      double threshold, std::uint64_t samples, Rng& rng) {
    const std::size_t s = powers.size();
    if (s == 0) throw std::invalid_argument("replaced_users_tail_mc: no users");
    if (static_cast<std::int64_t>(s) >= n) throw std::invalid_argument("replaced_users_tail_mc: need fewer users than dimensions");
    const double nd = static_cast<double>(n);
    // Unit vector i lives in the span of e_w and i further axes:
    //   u_i = (g_1, ..., g_i, sqrt(chi2_{n-i})) / norm.
    std::vector<std::vector<double>> u(s, std::vector<double>(s + 1, 0.0));
    std::uint64_t hits = 0;
    for (std::uint64_t draw = 0; draw < samples; ++draw) {
        for (std::size_t i = 0; i < s; ++i) {
            double norm2 = 0.0;
            for (std::size_t c = 0; c <= i; ++c) {
                u[i][c] = rng.normal();
                norm2 += u[i][c] * u[i][c];
            }
            const double rest = rng.chi_squared(nd - static_cast<double>(i + 1));
            u[i][i + 1] = std::sqrt(rest);
            norm2 += rest;
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t c = 0; c <= i + 1; ++c) u[i][c] *= inv;
        }
        double stat = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            stat += w_norm * std::sqrt(nd * powers[i]) * u[i][0] - 0.5 * nd * powers[i];
            for (std::size_t j = i + 1; j < s; ++j) {
                double ip = 0.0;
                for (std::size_t c = 0; c <= i + 1; ++c) ip += u[i][c] * u[j][c];
                stat -= nd * std::sqrt(powers[i] * powers[j]) * ip;
            }
        }
        hits += stat >= threshold;
    }
    return proportion_estimate(hits, samples);
}

EstimateWithCI rcu_mc_estimate(const MacConfig& cfg, unsigned workers) {
    cfg.validate();
    const int users = cfg.users();
    if (users > 3) throw SizeError("rcu_mc_estimate: at most 3 users supported");
    const auto n = static_cast<std::size_t>(cfg.n);
    const std::uint32_t subsets = static_cast<std::uint32_t>(subset_count(users));

    std::vector<double> values(cfg.trials, 0.0);
    parallel_for(cfg.trials, workers, [&](std::size_t sample) {
        Rng rng(derive_key(cfg.seed, {kRcuTag, sample}));
        std::vector<SphericalCodeword> x;
        for (int i = 0; i < users; ++i) x.push_back(sample_sphere(n, cfg.powers[i], rng));
        std::vector<double> y(n, 0.0);
        for (const auto& cw : x)
            for (std::size_t k = 0; k < n; ++k) y[k] += cw.symbols[k];
        for (double& v : y) v += rng.normal();

        double total = 0.0;
        std::vector<double> w(n), sum_s(n);
        for (std::uint32_t mask = 1; mask <= subsets; ++mask) {
            double multiplicity = 1.0;
            std::vector<double> powers;
            for (int i = 0; i < users; ++i)
                if ((mask >> i) & 1u) {
                    multiplicity *= static_cast<double>(cfg.messages[static_cast<std::size_t>(i)] - 1);
                    powers.push_back(cfg.powers[i]);
                }
            if (multiplicity == 0.0) continue;
            // w = y minus the codewords of users outside S; the statistic of the
            // true codewords of S is <w, sum x_S> - ||sum x_S||^2 / 2.
            w = y;
            std::fill(sum_s.begin(), sum_s.end(), 0.0);
            for (int i = 0; i < users; ++i) {
                const auto& sym = x[static_cast<std::size_t>(i)].symbols;
                if ((mask >> i) & 1u) {
                    for (std::size_t k = 0; k < n; ++k) sum_s[k] += sym[k];
                } else {
                    for (std::size_t k = 0; k < n; ++k) w[k] -= sym[k];
                }
            }
            const double threshold = dot(w, sum_s) - 0.5 * squared_norm(sum_s);
            const double w_norm = std::sqrt(squared_norm(w));
            double p;
            if (powers.size() == 1) {
                p = single_user_tail(powers[0], cfg.n, w_norm, threshold);
            } else {
                Rng inner(derive_key(rng.key(), mask));
                p = replaced_users_tail_mc(powers, cfg.n, w_norm, threshold, cfg.inner_samples, inner).point;
            }
            total += multiplicity * p;
        }
        values[sample] = std::min(1.0, total);
    });
    return mean_estimate(values);
}

}  // namespace fbl
