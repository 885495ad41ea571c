#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/scoring.hpp"
#include "vislip/text_io.hpp"

namespace vislip {

/// Pr{v | v-hat}: the share of hypothesis-v outputs whose reference was v.
/// Empty when v was never hypothesised.
inline std::optional<double> inverse_recognition_prob(const ConfusionMatrix& cm, std::string_view v) {
    const auto c = cm.require(v);
    const long column = cm.counts.col(c).sum();
    if (column <= 0) return std::nullopt;
    return static_cast<double>(cm.counts(c, c)) / static_cast<double>(column);
}

struct VisemeProbability {
    std::string viseme;
    double p = 0.0;
    double se = 0.0;
    bool defined = false;
    std::size_t n_folds = 0;  // folds in which the column was non-empty
};

enum class ProbabilityMode { kPerFold, kPooled };

/// Per-viseme probabilities over folds. Per-fold mode averages the folds in
/// which the viseme was hypothesised and reports the standard error of that
/// mean; pooled mode sums the matrices first and reports se = 0.
inline std::vector<VisemeProbability> viseme_probabilities(std::span<const ConfusionMatrix> folds,
                                                           ProbabilityMode mode = ProbabilityMode::kPerFold,
                                                           std::span<const std::string> skip = {}) {
    if (folds.empty()) throw Error("no confusion matrices supplied");
    std::vector<VisemeProbability> out;
    // Folds may disagree on the class list; work over the union in first-seen order.
    std::vector<std::string> labels;
    for (const auto& f : folds)
        for (const auto& l : f.labels)
            if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    std::vector<ConfusionMatrix> aligned;
    for (const auto& f : folds) aligned.push_back(f.relabeled(labels));
    ConfusionMatrix pooled(labels);
    for (const auto& f : aligned) pooled += f;
    for (const auto& v : labels) {
        if (std::find(skip.begin(), skip.end(), v) != skip.end()) continue;
        VisemeProbability vp;
        vp.viseme = v;
        if (mode == ProbabilityMode::kPooled) {
            auto p = inverse_recognition_prob(pooled, v);
            vp.defined = p.has_value();
            vp.p = p.value_or(0.0);
            vp.n_folds = folds.size();
        } else {
            std::vector<double> values;
            for (const auto& f : aligned)
                if (auto p = inverse_recognition_prob(f, v)) values.push_back(*p);
            vp.n_folds = values.size();
            vp.defined = !values.empty();
            if (vp.defined) {
                vp.p = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
                if (values.size() >= 2) {
                    double ss = 0.0;
                    for (double x : values) ss += (x - vp.p) * (x - vp.p);
                    vp.se = std::sqrt(ss / static_cast<double>(values.size() - 1)) /
                            std::sqrt(static_cast<double>(values.size()));
                }
            }
        }
        out.push_back(std::move(vp));
    }
    return out;
}

/// Visemes best first. Items whose values lie within the tie tolerance of
/// their group's leading value share a group and the mean of the ranks they
/// span. Undefined items close the list as one flagged group.
struct RankingResult {
    struct Item {
        std::string viseme;
        double value = 0.0;
        double se = 0.0;
        double rank = 0.0;
        std::size_t group = 0;
        bool defined = true;

        bool operator==(const Item&) const = default;
    };
    std::vector<Item> items;

    std::size_t size() const { return items.size(); }

    const Item* find(std::string_view v) const {
        for (const auto& it : items)
            if (it.viseme == v) return &it;
        return nullptr;
    }

    /// Brace notation for tied groups: `/v18/ {/v04/, /v12/} /v11/`.
    std::string format() const {
        std::string out;
        for (std::size_t i = 0; i < items.size();) {
            std::size_t j = i;
            while (j < items.size() && items[j].group == items[i].group) ++j;
            if (!out.empty()) out += ' ';
            if (j - i == 1) {
                out += "/" + items[i].viseme + "/";
            } else {
                out += "{";
                for (std::size_t k = i; k < j; ++k) out += (k > i ? ", /" : "/") + items[k].viseme + "/";
                out += "}";
            }
            i = j;
        }
        return out;
    }

    bool operator==(const RankingResult&) const = default;
};

namespace detail {

/// Assigns mean ranks to runs of equal group ids (items already ordered).
inline void assign_group_ranks(std::vector<RankingResult::Item>& items) {
    for (std::size_t i = 0; i < items.size();) {
        std::size_t j = i;
        while (j < items.size() && items[j].group == items[i].group) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) items[k].rank = rank;
        i = j;
    }
}

}  // namespace detail

inline RankingResult rank_visemes(std::span<const VisemeProbability> probs, double tie_epsilon = 0.005) {
    RankingResult r;
    for (const auto& p : probs) {
        if (p.defined && !std::isfinite(p.p)) throw Error("probability for '" + p.viseme + "' is not finite");
        r.items.push_back({p.viseme, p.p, p.se, 0.0, 0, p.defined});
    }
    std::stable_sort(r.items.begin(), r.items.end(), [](const auto& a, const auto& b) {
        if (a.defined != b.defined) return a.defined;
        if (a.defined && a.value != b.value) return a.value > b.value;
        return a.viseme < b.viseme;
    });
    std::size_t group = 0;
    double lead = 0.0;
    for (std::size_t i = 0; i < r.items.size(); ++i) {
        auto& it = r.items[i];
        if (i == 0) {
            lead = it.value;
        } else {
            const auto& prev = r.items[i - 1];
            const bool joins = it.defined == prev.defined && (!it.defined || lead - it.value <= tie_epsilon);
            if (!joins) {
                ++group;
                lead = it.value;
            }
        }
        it.group = group;
    }
    detail::assign_group_ranks(r.items);
    return r;
}

struct CorrelationResult {
    double r = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    bool exact = false;  // permutation distribution rather than t approximation

    bool significant(double alpha = 0.05) const { return p_value < alpha; }
};

/// Pearson correlation of two rank vectors.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) throw UndefinedError("correlation undefined: a ranking has zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Two-tailed p-value of r from the exact permutation distribution: the
/// share of all n! reorderings of `b` whose |r| reaches the observed |r|.
inline double permutation_p_value(std::span<const double> a, std::span<const double> b, double r_obs) {
    const std::size_t n = a.size();
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    const double denom = std::sqrt(saa * sbb);
    std::vector<double> ca(n), cb(n);
    for (std::size_t i = 0; i < n; ++i) {
        ca[i] = a[i] - ma;
        cb[i] = b[i] - mb;
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    const double target = std::abs(r_obs) - 1e-12;
    unsigned long long hits = 0, total = 0;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += ca[i] * cb[perm[i]];
        if (std::abs(s / denom) >= target) ++hits;
        ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(hits) / static_cast<double>(total);
}

/// Two-tailed p-value from t = r sqrt((n - 2) / (1 - r^2)) on n - 2 dof.
inline double t_approx_p_value(double r, std::size_t n) {
    if (std::abs(r) >= 1.0) return 0.0;
    const double dof = static_cast<double>(n - 2);
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    boost::math::students_t_distribution<double> dist(dof);
    return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

inline constexpr std::size_t kExactPermutationLimit = 10;

/// Spearman correlation of two rank vectors over the same items (ties given
/// as fractional ranks). p-values are exact for n <= 10, t-approximated above.
inline CorrelationResult spearman_ranks(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("rankings cover different numbers of items");
    if (a.size() < 3) throw Error("Spearman correlation needs at least three items");
    CorrelationResult c;
    c.n = a.size();
    c.r = pearson(a, b);
    c.exact = c.n <= kExactPermutationLimit;
    c.p_value = c.exact ? permutation_p_value(a, b, c.r) : t_approx_p_value(c.r, c.n);
    return c;
}

/// Fractional ranks of values (1 = largest). Equal values share the mean rank.
inline std::vector<double> fractional_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] > values[j]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

/// Correlation of two rankings over the visemes defined in both; each
/// ranking's groups (ties) are kept and re-ranked on the shared subset.
inline CorrelationResult spearman(const RankingResult& a, const RankingResult& b) {
    std::vector<std::string> shared;
    for (const auto& it : a.items)
        if (it.defined)
            if (const auto* other = b.find(it.viseme); other && other->defined) shared.push_back(it.viseme);
    std::sort(shared.begin(), shared.end());
    auto subset_ranks = [&](const RankingResult& r) {
        std::vector<RankingResult::Item> items;
        for (const auto& it : r.items)
            if (std::binary_search(shared.begin(), shared.end(), it.viseme)) items.push_back(it);
        detail::assign_group_ranks(items);
        std::vector<double> ranks(shared.size());
        for (const auto& it : items)
            ranks[static_cast<std::size_t>(std::lower_bound(shared.begin(), shared.end(), it.viseme) - shared.begin())] =
                it.rank;
        return ranks;
    };
    const auto ra = subset_ranks(a);
    const auto rb = subset_ranks(b);
    return spearman_ranks(ra, rb);
}

struct FoldStatistics {
    double mean = 0.0;
    double standard_error = 0.0;
    std::size_t n_folds = 0;
};

/// Mean and standard error (sample standard deviation / sqrt(n)).
inline FoldStatistics fold_stats(std::span<const double> values) {
    if (values.size() < 2) throw Error("fold statistics need at least two folds");
    FoldStatistics s;
    s.n_folds = values.size();
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    return s;
}

inline constexpr std::string_view kFoldStatsHeader = "Feature type\tMean\tStandard error";

/// `<name>\t<mean>\t<se>` with four decimals, e.g. "T1 Shape\t21.7360\t0.7501".
inline std::string format_fold_stats_row(std::string_view name, const FoldStatistics& s) {
    return std::string(name) + "\t" + text::format_fixed(s.mean, 4) + "\t" + text::format_fixed(s.standard_error, 4);
}

struct DeclinePoint {
    std::size_t position = 0;  // 1 = best
    std::string viseme;
    double mean = 0.0;
    double se = 0.0;

    bool operator==(const DeclinePoint&) const = default;
};

/// The k best defined visemes by mean probability, best first.
inline std::vector<DeclinePoint> decline_curve(std::span<const VisemeProbability> probs, std::size_t k) {
    std::vector<const VisemeProbability*> defined;
    for (const auto& p : probs)
        if (p.defined) defined.push_back(&p);
    if (k > defined.size())
        throw Error("decline curve asks for " + std::to_string(k) + " visemes, only " +
                    std::to_string(defined.size()) + " are defined");
    std::stable_sort(defined.begin(), defined.end(), [](const auto* a, const auto* b) {
        if (a->p != b->p) return a->p > b->p;
        return a->viseme < b->viseme;
    });
    std::vector<DeclinePoint> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back({i + 1, defined[i]->viseme, defined[i]->p, defined[i]->se});
    return out;
}

/// Step-by-step drop of two decline curves over their common length.
struct DeclineComparison {
    std::vector<double> drops_a;  // mean[i] - mean[i + 1]
    std::vector<double> drops_b;
    double total_drop_a = 0.0;
    double total_drop_b = 0.0;
    std::size_t steeper_steps_a = 0;  // steps where a drops more than b

    bool a_steeper() const { return total_drop_a > total_drop_b; }
};

inline DeclineComparison compare_declines(std::span<const DeclinePoint> a, std::span<const DeclinePoint> b) {
    DeclineComparison c;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i + 1 < n; ++i) {
        c.drops_a.push_back(a[i].mean - a[i + 1].mean);
        c.drops_b.push_back(b[i].mean - b[i + 1].mean);
        if (c.drops_a.back() > c.drops_b.back()) ++c.steeper_steps_a;
    }
    if (n >= 2) {
        c.total_drop_a = a[0].mean - a[n - 1].mean;
        c.total_drop_b = b[0].mean - b[n - 1].mean;
    }
    return c;
}

// Report files. Every CSV has a header row; floats use the shortest
// representation that parses back exactly.

inline std::string save_ranking_csv(const RankingResult& r) {
    std::string out = "position,viseme,probability,se,rank,group,defined\n";
    for (std::size_t i = 0; i < r.items.size(); ++i) {
        const auto& it = r.items[i];
        out += std::to_string(i + 1) + "," + it.viseme + "," + text::format_double(it.value) + "," +
               text::format_double(it.se) + "," + text::format_double(it.rank) + "," + std::to_string(it.group) + "," +
               (it.defined ? "1" : "0") + "\n";
    }
    return out;
}

inline RankingResult load_ranking_csv(std::string_view contents) {
    const auto ls = text::lines(contents);
    if (ls.empty() || ls[0] != "position,viseme,probability,se,rank,group,defined")
        throw ParseError("unexpected ranking CSV header", 1);
    RankingResult r;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        if (text::trim(ls[i]).empty()) continue;
        auto c = text::split(ls[i], ',');
        if (c.size() != 7) throw ParseError("ranking rows have seven fields", i + 1);
        r.items.push_back({c[1], text::parse_double(c[2], i + 1), text::parse_double(c[3], i + 1),
                           text::parse_double(c[4], i + 1), static_cast<std::size_t>(text::parse_int(c[5], i + 1)),
                           c[6] == "1"});
    }
    return r;
}

inline std::string save_decline_csv(std::span<const DeclinePoint> pts) {
    std::string out = "position,viseme,mean,se\n";
    for (const auto& p : pts)
        out += std::to_string(p.position) + "," + p.viseme + "," + text::format_double(p.mean) + "," +
               text::format_double(p.se) + "\n";
    return out;
}

inline std::vector<DeclinePoint> load_decline_csv(std::string_view contents) {
    const auto ls = text::lines(contents);
    if (ls.empty() || ls[0] != "position,viseme,mean,se") throw ParseError("unexpected decline CSV header", 1);
    std::vector<DeclinePoint> out;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        if (text::trim(ls[i]).empty()) continue;
        auto c = text::split(ls[i], ',');
        if (c.size() != 4) throw ParseError("decline rows have four fields", i + 1);
        out.push_back({static_cast<std::size_t>(text::parse_int(c[0], i + 1)), c[1], text::parse_double(c[2], i + 1),
                       text::parse_double(c[3], i + 1)});
    }
    return out;
}

/// Three columns for plotting: position, mean, standard error.
inline std::string save_decline_dat(std::span<const DeclinePoint> pts) {
    std::string out = "# position mean se viseme\n";
    for (const auto& p : pts)
        out += std::to_string(p.position) + " " + text::format_double(p.mean) + " " + text::format_double(p.se) + " " +
               p.viseme + "\n";
    return out;
}

struct NamedCorrelation {
    std::string a;
    std::string b;
    CorrelationResult result;
};

inline std::string save_correlations_csv(std::span<const NamedCorrelation> cs) {
    std::string out = "a,b,r,p,n,method,significant\n";
    for (const auto& c : cs)
        out += c.a + "," + c.b + "," + text::format_double(c.result.r) + "," + text::format_double(c.result.p_value) +
               "," + std::to_string(c.result.n) + "," + (c.result.exact ? "exact" : "t") + "," +
               (c.result.significant() ? "1" : "0") + "\n";
    return out;
}

inline std::vector<NamedCorrelation> load_correlations_csv(std::string_view contents) {
    const auto ls = text::lines(contents);
    if (ls.empty() || ls[0] != "a,b,r,p,n,method,significant") throw ParseError("unexpected correlation CSV header", 1);
    std::vector<NamedCorrelation> out;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        if (text::trim(ls[i]).empty()) continue;
        auto c = text::split(ls[i], ',');
        if (c.size() != 7) throw ParseError("correlation rows have seven fields", i + 1);
        CorrelationResult r;
        r.r = text::parse_double(c[2], i + 1);
        r.p_value = text::parse_double(c[3], i + 1);
        r.n = static_cast<std::size_t>(text::parse_int(c[4], i + 1));
        r.exact = c[5] == "exact";
        out.push_back({c[0], c[1], r});
    }
    return out;
}

struct NamedFoldStatistics {
    std::string name;
    FoldStatistics stats;
};

inline std::string save_fold_stats_csv(std::span<const NamedFoldStatistics> rows) {
    std::string out = "feature,mean,se,n_folds\n";
    for (const auto& r : rows)
        out += r.name + "," + text::format_double(r.stats.mean) + "," + text::format_double(r.stats.standard_error) +
               "," + std::to_string(r.stats.n_folds) + "\n";
    return out;
}

inline std::vector<NamedFoldStatistics> load_fold_stats_csv(std::string_view contents) {
    const auto ls = text::lines(contents);
    if (ls.empty() || ls[0] != "feature,mean,se,n_folds") throw ParseError("unexpected fold-stat CSV header", 1);
    std::vector<NamedFoldStatistics> out;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        if (text::trim(ls[i]).empty()) continue;
        auto c = text::split(ls[i], ',');
        if (c.size() != 4) throw ParseError("fold-stat rows have four fields", i + 1);
        out.push_back({c[0], {text::parse_double(c[1], i + 1), text::parse_double(c[2], i + 1),
                              static_cast<std::size_t>(text::parse_int(c[3], i + 1))}});
    }
    return out;
}

/// Table-style text block: header line then one formatted row per feature.
inline std::string format_fold_stats_table(std::span<const NamedFoldStatistics> rows) {
    std::string out = std::string(kFoldStatsHeader) + "\n";
    for (const auto& r : rows) out += format_fold_stats_row(r.name, r.stats) + "\n";
    return out;
}

}  // namespace vislip
