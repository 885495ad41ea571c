#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "vislip/analysis.hpp"
#include "vislip/rng.hpp"

using namespace vislip;

namespace {

std::vector<double> as_double(const std::vector<int>& v) { return {v.begin(), v.end()}; }

VisemeProbability prob(std::string v, double p, bool defined = true) {
    VisemeProbability out;
    out.viseme = std::move(v);
    out.p = p;
    out.defined = defined;
    out.n_folds = defined ? 1 : 0;
    return out;
}

// A fold in which each listed viseme is hypothesised `total` times, `right` of them correctly.
ConfusionMatrix fold(const std::vector<std::string>& labels, const std::vector<std::pair<long, long>>& right_total) {
    ConfusionMatrix cm(labels);
    const auto n = static_cast<Eigen::Index>(labels.size());
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto [right, total] = right_total[static_cast<std::size_t>(c)];
        cm.counts(c, c) = right;
        cm.counts((c + 1) % n, c) = total - right;
    }
    return cm;
}

}  // namespace

TEST(InverseProbability, ColumnShare) {
    ConfusionMatrix cm({"v01", "v02"});
    cm.counts(0, 0) = 3;  // three /v01/ outputs were /v01/
    cm.counts(1, 0) = 1;  // one was /v02/
    EXPECT_DOUBLE_EQ(*inverse_recognition_prob(cm, "v01"), 0.75);
    EXPECT_FALSE(inverse_recognition_prob(cm, "v02").has_value());
    EXPECT_THROW(inverse_recognition_prob(cm, "v03"), Error);
    // deletions and insertions do not enter the column
    cm.deletions(0) = 9;
    cm.insertions(0) = 9;
    EXPECT_DOUBLE_EQ(*inverse_recognition_prob(cm, "v01"), 0.75);
}

TEST(VisemeProbabilities, PerFoldMeanAndError) {
    const std::vector<ConfusionMatrix> folds{fold({"a", "b"}, {{1, 2}, {4, 4}}), fold({"a", "b"}, {{3, 4}, {0, 0}})};
    const auto ps = viseme_probabilities(folds);
    ASSERT_EQ(ps.size(), 2u);
    EXPECT_DOUBLE_EQ(ps[0].p, 0.625);
    EXPECT_NEAR(ps[0].se, 0.125, 1e-15);  // sd 0.1768 / sqrt 2
    EXPECT_EQ(ps[0].n_folds, 2u);
    EXPECT_DOUBLE_EQ(ps[1].p, 1.0);
    EXPECT_EQ(ps[1].n_folds, 1u);
    const auto pooled = viseme_probabilities(folds, ProbabilityMode::kPooled);
    EXPECT_DOUBLE_EQ(pooled[0].p, 4.0 / 6.0);
    EXPECT_EQ(pooled[0].se, 0.0);
    const std::vector<std::string> skip{"b"};
    EXPECT_EQ(viseme_probabilities(folds, ProbabilityMode::kPerFold, skip).size(), 1u);
    EXPECT_THROW(viseme_probabilities(std::vector<ConfusionMatrix>{}), Error);
}

TEST(VisemeProbabilities, UnionOfClassLists) {
    const std::vector<ConfusionMatrix> folds{fold({"a", "b"}, {{1, 1}, {1, 2}}), fold({"c", "a"}, {{2, 2}, {0, 1}})};
    const auto ps = viseme_probabilities(folds);
    ASSERT_EQ(ps.size(), 3u);
    EXPECT_EQ(ps[2].viseme, "c");
    EXPECT_DOUBLE_EQ(ps[0].p, 0.5);
}

TEST(Ranking, OrdersAndGroupsTies) {
    const std::vector<VisemeProbability> ps{prob("v04", 0.80), prob("v12", 0.803), prob("v18", 0.95),
                                            prob("v11", 0.70), prob("v09", 0.0, false)};
    const auto r = rank_visemes(ps);
    ASSERT_EQ(r.size(), 5u);
    EXPECT_EQ(r.format(), "/v18/ {/v12/, /v04/} /v11/ /v09/");
    EXPECT_EQ(r.find("v18")->rank, 1.0);
    EXPECT_EQ(r.find("v12")->rank, 2.5);
    EXPECT_EQ(r.find("v04")->rank, 2.5);
    EXPECT_EQ(r.find("v11")->rank, 4.0);
    EXPECT_EQ(r.find("v09")->rank, 5.0);
    EXPECT_FALSE(r.find("v09")->defined);
    EXPECT_EQ(r.find("zz"), nullptr);
}

TEST(Ranking, TieToleranceAnchorsOnGroupLeader) {
    // 0.900, 0.896, 0.892: the third is within 0.005 of the second but not the first
    const std::vector<VisemeProbability> ps{prob("a", 0.900), prob("b", 0.896), prob("c", 0.892)};
    const auto r = rank_visemes(ps);
    EXPECT_EQ(r.format(), "{/a/, /b/} /c/");
    EXPECT_EQ(rank_visemes(ps, 0.0).format(), "/a/ /b/ /c/");
}

TEST(Ranking, IdentityProbabilitiesRankBestFirst) {
    std::vector<VisemeProbability> ps;
    for (int i = 0; i < 8; ++i) ps.push_back(prob("v0" + std::to_string(i + 1), 1.0 - 0.1 * i));
    const auto r = rank_visemes(ps);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r.items[i].rank, static_cast<double>(i + 1));
}

TEST(Spearman, WorkedExample) {
    const auto a = as_double({1, 2, 3, 4}), b = as_double({2, 1, 4, 3});
    const auto c = spearman_ranks(a, b);
    EXPECT_NEAR(c.r, 0.6, 1e-12);
    EXPECT_TRUE(c.exact);
    EXPECT_NEAR(c.p_value, oracle::spearman_permutation_p({1, 2, 3, 4}, {2, 1, 4, 3}), 1e-12);
    EXPECT_FALSE(c.significant());
}

TEST(Spearman, MatchesFormulaAndPermutationOracle) {
    Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = static_cast<int>(rng.between(3, 8));
        std::vector<int> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
        std::iota(a.begin(), a.end(), 1);
        std::iota(b.begin(), b.end(), 1);
        for (int i = n - 1; i > 0; --i) std::swap(b[static_cast<std::size_t>(i)], b[rng.index(static_cast<std::uint64_t>(i + 1))]);
        const auto c = spearman_ranks(as_double(a), as_double(b));
        EXPECT_NEAR(c.r, oracle::spearman_formula(a, b), 1e-12);
        EXPECT_NEAR(c.p_value, oracle::spearman_permutation_p(a, b), 1e-12);
    }
}

TEST(Spearman, PerfectAgreementIsSignificant) {
    std::vector<double> a(12);
    std::iota(a.begin(), a.end(), 1.0);
    const auto c = spearman_ranks(a, a);
    EXPECT_DOUBLE_EQ(c.r, 1.0);
    EXPECT_FALSE(c.exact);
    EXPECT_EQ(c.p_value, 0.0);
    EXPECT_TRUE(c.significant());
    std::vector<double> rev(a.rbegin(), a.rend());
    EXPECT_DOUBLE_EQ(spearman_ranks(a, rev).r, -1.0);
}

TEST(Spearman, TApproximationValue) {
    // r = 0.5, n = 12: t = 0.5 sqrt(10 / 0.75) = 1.8257 on 10 dof, two-tailed p = 0.09797
    EXPECT_NEAR(t_approx_p_value(0.5, 12), 0.0979, 1e-3);
}

TEST(Spearman, ErrorsAndTies) {
    const auto a = as_double({1, 2, 3});
    EXPECT_THROW(spearman_ranks(a, as_double({1, 2})), Error);
    EXPECT_THROW(spearman_ranks(as_double({1, 2}), as_double({1, 2})), Error);
    EXPECT_THROW(spearman_ranks(a, std::vector<double>{2, 2, 2}), UndefinedError);
    const std::vector<double> v{0.3, 0.9, 0.3, 0.1};
    EXPECT_EQ(fractional_ranks(v), (std::vector<double>{2.5, 1.0, 2.5, 4.0}));
}

TEST(Spearman, RankingsOverSharedVisemes) {
    const std::vector<VisemeProbability> pa{prob("a", 0.9), prob("b", 0.8), prob("c", 0.7), prob("d", 0.6),
                                            prob("e", 0.5)};
    const std::vector<VisemeProbability> pb{prob("a", 0.7), prob("b", 0.9), prob("c", 0.5), prob("d", 0.6),
                                            prob("e", 0.0, false), prob("f", 0.99)};
    const auto c = spearman(rank_visemes(pa), rank_visemes(pb));
    EXPECT_EQ(c.n, 4u);
    EXPECT_NEAR(c.r, 0.6, 1e-12);
}

TEST(FoldStats, WorkedExample) {
    const std::vector<double> v{1, 2, 3, 4, 5};
    const auto s = fold_stats(v);
    EXPECT_DOUBLE_EQ(s.mean, 3.0);
    EXPECT_NEAR(s.standard_error, 0.7071, 5e-5);
    EXPECT_EQ(format_fold_stats_row("T1 Shape", s), "T1 Shape\t3.0000\t0.7071");
    EXPECT_THROW(fold_stats(std::vector<double>{1.0}), Error);
    const std::vector<NamedFoldStatistics> rows{{"Accuracy", s}};
    EXPECT_EQ(format_fold_stats_table(rows), "Feature type\tMean\tStandard error\nAccuracy\t3.0000\t0.7071\n");
}

TEST(Decline, TopKAndComparison) {
    const std::vector<VisemeProbability> ps{prob("a", 0.5), prob("b", 0.9), prob("c", 0.7), prob("d", 0.2, false)};
    const auto d = decline_curve(ps, 3);
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d[0].viseme, "b");
    EXPECT_EQ(d[2].position, 3u);
    EXPECT_THROW(decline_curve(ps, 4), Error);
    const std::vector<VisemeProbability> flat{prob("a", 0.6), prob("b", 0.55), prob("c", 0.5)};
    const auto cmp = compare_declines(d, decline_curve(flat, 3));
    EXPECT_TRUE(cmp.a_steeper());
    EXPECT_NEAR(cmp.total_drop_a, 0.4, 1e-15);
    EXPECT_EQ(cmp.steeper_steps_a, 2u);
}

TEST(Reports, CsvRoundTripsAreLossless) {
    const std::vector<VisemeProbability> ps{prob("v18", 0.1 + 0.2), prob("v01", 1.0 / 3.0), prob("v02", 0.0, false)};
    const auto r = rank_visemes(ps);
    EXPECT_EQ(load_ranking_csv(save_ranking_csv(r)), r);
    const auto d = decline_curve(ps, 2);
    EXPECT_EQ(load_decline_csv(save_decline_csv(d)), d);
    EXPECT_EQ(save_decline_dat(d).substr(0, 26), "# position mean se viseme\n");
    const std::vector<NamedCorrelation> cs{{"shape", "app", spearman_ranks(as_double({1, 2, 3, 4}), as_double({2, 1, 4, 3}))}};
    const auto back = load_correlations_csv(save_correlations_csv(cs));
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].result.r, cs[0].result.r);
    EXPECT_EQ(back[0].result.p_value, cs[0].result.p_value);
    EXPECT_TRUE(back[0].result.exact);
    const std::vector<NamedFoldStatistics> fs{{"Accuracy", fold_stats(std::vector<double>{61.25, 70.0 / 3.0, 99.5})}};
    const auto fb = load_fold_stats_csv(save_fold_stats_csv(fs));
    EXPECT_EQ(fb[0].stats.mean, fs[0].stats.mean);
    EXPECT_EQ(fb[0].stats.standard_error, fs[0].stats.standard_error);
    EXPECT_THROW(load_ranking_csv("bad\n"), ParseError);
    EXPECT_THROW(load_decline_csv("bad\n"), ParseError);
    EXPECT_THROW(load_correlations_csv("bad\n"), ParseError);
    EXPECT_THROW(load_fold_stats_csv("bad\n"), ParseError);
}
