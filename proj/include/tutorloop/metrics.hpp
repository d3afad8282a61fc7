#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tutorloop::metrics {

// One item scored by two raters on a shared ordinal scale 0..k-1.
struct LabelPair {
    std::string item_id;
    int human = 0;
    int machine = 0;
};

// Cohen's kappa with quadratic weights (i-j)^2/(k-1)^2. Returns exactly 1.0
// when there is no weighted disagreement and 0.0 when the expected weighted
// disagreement is zero.
double quadratic_weighted_kappa(std::span<const LabelPair> pairs, int k);

// Micro-averaged F1 over all classes. For single-label data this is accuracy.
double micro_f1(std::span<const LabelPair> pairs, int k);

// ---------------------------------------------------------------------------
// Bootstrap

struct AgreementReport {
    std::string metric;
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::size_t resamples = 0;
    double level = 0.95;

    bool operator==(const AgreementReport&) const = default;

    // Half-width of the interval, the "±" figure in rendered tables.
    double half_width() const { return (ci_high - ci_low) / 2.0; }
};

struct BootstrapOptions {
    std::size_t resamples = 2000;
    std::uint64_t seed = 312;
    double level = 0.95;
    unsigned parallelism = 1;
};

// A statistic evaluated on a resample given as indices into the original
// data. nullopt marks the statistic as undefined on that resample.
using IndexStatistic = std::function<std::optional<double>(std::span<const std::size_t>)>;

// Percentile bootstrap. Each resample draws from its own sub-seed, so serial
// and parallel runs agree bit-for-bit.
AgreementReport bootstrap_ci(std::size_t n, const IndexStatistic& statistic,
                             const std::string& metric_name, const BootstrapOptions& options);

using PairMetric = std::function<std::optional<double>(std::span<const LabelPair>)>;

AgreementReport bootstrap_ci(std::span<const LabelPair> pairs, const PairMetric& metric,
                             const std::string& metric_name, const BootstrapOptions& options);

// Deterministic generator used for resampling and splits. Integer ranges are
// mapped by rejection so results do not depend on the standard library's
// distribution implementations.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t next();
    std::size_t uniform_index(std::size_t n);

private:
    std::uint64_t state_[4];
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t attempt = 0);

// ---------------------------------------------------------------------------
// Faithfulness

// Exact non-negative rational, used for percentages so that the three rates
// of a sequence sum to exactly 100 before any rounding.
class Rational {
public:
    Rational() = default;
    Rational(std::int64_t num, std::int64_t den);

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    friend Rational operator+(const Rational& a, const Rational& b);
    friend bool operator==(const Rational& a, const Rational& b) = default;

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

enum class Codomain { Ternary, Binary };

struct FaithLabelSeq {
    std::string construct;
    Codomain codomain = Codomain::Ternary;
    std::vector<int> labels;
};

struct FaithRates {
    Rational f;
    Rational unf;
    Rational neu;
    std::size_t n = 0;
};

// F = share of +1 labels, UNF = share of -1 labels (0 labels for binary
// sequences), NEU = the rest; all as percentages.
FaithRates faithfulness_rates(const FaithLabelSeq& seq);

// ---------------------------------------------------------------------------
// Stratified split

struct SplitResult {
    std::vector<std::size_t> holdout;    // indices, ascending
    std::vector<std::size_t> remainder;  // indices, ascending
    std::map<std::string, std::size_t> holdout_per_class;
};

// Largest-remainder apportionment of `total` seats across classes of the
// given sizes. Ties go to the earlier class.
std::vector<std::size_t> largest_remainder(std::span<const std::size_t> class_sizes,
                                           std::size_t total);

SplitResult stratified_split(std::span<const std::string> class_labels, std::size_t holdout_n,
                             std::uint64_t seed);

}  // namespace tutorloop::metrics
