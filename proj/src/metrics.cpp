#include "tutorloop/metrics.hpp"

#include "tutorloop/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace tutorloop::metrics {

namespace {

void check_pairs(std::span<const LabelPair> pairs, int k) {
    if (pairs.empty()) throw EmptyInput("no label pairs");
    if (k < 2) throw LabelOutOfRange("score scale needs at least 2 levels, got " + std::to_string(k));
    for (const auto& p : pairs) {
        if (p.human < 0 || p.human >= k || p.machine < 0 || p.machine >= k) {
            throw LabelOutOfRange("pair '" + p.item_id + "' (" + std::to_string(p.human) + ", " +
                                  std::to_string(p.machine) + ") outside 0.." +
                                  std::to_string(k - 1));
        }
    }
}

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

double percentile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

double quadratic_weighted_kappa(std::span<const LabelPair> pairs, int k) {
    check_pairs(pairs, k);
    const auto n = static_cast<std::int64_t>(pairs.size());

    // Integer form: sum w*O / sum w*E = n * sum d^2 C_ij / sum d^2 r_i c_j,
    // the (k-1)^2 weight normaliser and the 1/n scalings cancel.
    std::vector<std::int64_t> rows(k, 0), cols(k, 0);
    std::int64_t observed = 0;
    for (const auto& p : pairs) {
        const std::int64_t d = p.human - p.machine;
        observed += d * d;
        ++rows[p.human];
        ++cols[p.machine];
    }
    if (observed == 0) return 1.0;

    std::int64_t expected = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const std::int64_t d = i - j;
            expected += d * d * rows[i] * cols[j];
        }
    }
    if (expected == 0) return 0.0;
    return 1.0 - static_cast<double>(n * observed) / static_cast<double>(expected);
}

double micro_f1(std::span<const LabelPair> pairs, int k) {
    check_pairs(pairs, k);
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (int c = 0; c < k; ++c) {
        for (const auto& p : pairs) {
            if (p.machine == c && p.human == c) ++tp;
            if (p.machine == c && p.human != c) ++fp;
            if (p.human == c && p.machine != c) ++fn;
        }
    }
    return static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
}

// ---------------------------------------------------------------------------

SeededRng::SeededRng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t SeededRng::next() {
    // xoshiro256**
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

std::size_t SeededRng::uniform_index(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t r;
    do {
        r = next();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t attempt) {
    std::uint64_t x = seed;
    std::uint64_t h = splitmix64(x);
    x = h ^ (stream * 0xd1b54a32d192ed03ULL);
    h = splitmix64(x);
    x = h ^ (attempt * 0x8cb92ba72f3d8dd7ULL);
    return splitmix64(x);
}

AgreementReport bootstrap_ci(std::size_t n, const IndexStatistic& statistic,
                             const std::string& metric_name, const BootstrapOptions& options) {
    if (n == 0) throw EmptyInput("bootstrap over empty data");
    if (options.resamples < 100) {
        throw ValidationError("bootstrap needs at least 100 resamples, got " +
                              std::to_string(options.resamples));
    }
    if (!(options.level > 0.0 && options.level < 1.0)) {
        throw ValidationError("confidence level must lie in (0, 1)");
    }

    std::vector<std::size_t> identity(n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    const auto point = statistic(identity);
    if (!point) throw UndefinedMetric(metric_name + " is undefined on the full sample");

    const std::size_t B = options.resamples;
    const std::size_t max_attempts = 10 * B;
    std::vector<double> stats(B, 0.0);
    std::vector<std::size_t> attempts(B, 0);

    auto run_range = [&](std::size_t begin, std::size_t end) {
        std::vector<std::size_t> idx(n);
        for (std::size_t b = begin; b < end; ++b) {
            for (std::size_t a = 0;; ++a) {
                if (a >= max_attempts) break;
                SeededRng rng(mix_seed(options.seed, b, a));
                for (auto& i : idx) i = rng.uniform_index(n);
                ++attempts[b];
                if (auto v = statistic(idx)) {
                    stats[b] = *v;
                    break;
                }
            }
        }
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(options.parallelism,
                                                             static_cast<unsigned>(B)));
    if (workers == 1) {
        run_range(0, B);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (B + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(B, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(run_range, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    const std::size_t total_attempts = std::accumulate(attempts.begin(), attempts.end(), std::size_t{0});
    if (total_attempts > max_attempts) {
        throw UndefinedMetric(metric_name + " undefined on too many resamples");
    }

    std::sort(stats.begin(), stats.end());
    const double alpha = 1.0 - options.level;
    AgreementReport report;
    report.metric = metric_name;
    report.point = *point;
    report.ci_low = percentile(stats, alpha / 2.0);
    report.ci_high = percentile(stats, 1.0 - alpha / 2.0);
    report.n = n;
    report.seed = options.seed;
    report.resamples = B;
    report.level = options.level;
    return report;
}

AgreementReport bootstrap_ci(std::span<const LabelPair> pairs, const PairMetric& metric,
                             const std::string& metric_name, const BootstrapOptions& options) {
    if (pairs.empty()) throw EmptyInput("bootstrap over empty pairs");
    return bootstrap_ci(
        pairs.size(),
        [&](std::span<const std::size_t> idx) -> std::optional<double> {
            std::vector<LabelPair> sample;
            sample.reserve(idx.size());
            for (auto i : idx) sample.push_back(pairs[i]);
            return metric(sample);
        },
        metric_name, options);
}

// ---------------------------------------------------------------------------

Rational::Rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw ZeroDenominator("rational with zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    num_ = g ? num / g : 0;
    den_ = g ? den / g : 1;
}

Rational operator+(const Rational& a, const Rational& b) {
    return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
}

FaithRates faithfulness_rates(const FaithLabelSeq& seq) {
    if (seq.labels.empty()) throw EmptySequence("no labels for construct " + seq.construct);
    std::int64_t pos = 0, zero = 0, neg = 0;
    for (int label : seq.labels) {
        switch (label) {
            case 1: ++pos; break;
            case 0: ++zero; break;
            case -1:
                if (seq.codomain == Codomain::Binary) {
                    throw LabelOutOfRange("label -1 outside binary codomain of " + seq.construct);
                }
                ++neg;
                break;
            default:
                throw LabelOutOfRange("label " + std::to_string(label) + " outside codomain of " +
                                      seq.construct);
        }
    }
    const auto n = static_cast<std::int64_t>(seq.labels.size());
    FaithRates rates;
    rates.n = seq.labels.size();
    rates.f = Rational(100 * pos, n);
    if (seq.codomain == Codomain::Binary) {
        rates.unf = Rational(100 * zero, n);
        rates.neu = Rational(0, 1);
    } else {
        rates.unf = Rational(100 * neg, n);
        rates.neu = Rational(100 * zero, n);
    }
    return rates;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> largest_remainder(std::span<const std::size_t> class_sizes,
                                           std::size_t total) {
    const std::size_t population =
        std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
    std::vector<std::size_t> seats(class_sizes.size(), 0);
    if (population == 0) return seats;

    // quota_c = total * size_c / population, kept as integer quotient + remainder
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (remainder, class)
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        const std::size_t scaled = total * class_sizes[c];
        seats[c] = scaled / population;
        assigned += seats[c];
        order.emplace_back(scaled % population, c);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total && i < order.size(); ++i, ++assigned) {
        ++seats[order[i].second];
    }
    return seats;
}

SplitResult stratified_split(std::span<const std::string> class_labels, std::size_t holdout_n,
                             std::uint64_t seed) {
    if (holdout_n > class_labels.size()) {
        throw InsufficientItems("holdout of " + std::to_string(holdout_n) + " requested from " +
                                std::to_string(class_labels.size()) + " items");
    }

    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < class_labels.size(); ++i) by_class[class_labels[i]].push_back(i);

    std::vector<std::size_t> sizes;
    for (const auto& [label, members] : by_class) sizes.push_back(members.size());
    const auto seats = largest_remainder(sizes, holdout_n);

    SplitResult result;
    std::vector<bool> in_holdout(class_labels.size(), false);
    std::size_t c = 0;
    for (auto& [label, members] : by_class) {
        SeededRng rng(mix_seed(seed, c));
        // Partial Fisher-Yates: the first seats[c] positions become the sample.
        for (std::size_t i = 0; i < seats[c]; ++i) {
            const std::size_t j = i + rng.uniform_index(members.size() - i);
            std::swap(members[i], members[j]);
            in_holdout[members[i]] = true;
        }
        result.holdout_per_class[label] = seats[c];
        ++c;
    }
    for (std::size_t i = 0; i < class_labels.size(); ++i) {
        (in_holdout[i] ? result.holdout : result.remainder).push_back(i);
    }
    return result;
}

}  // namespace tutorloop::metrics
