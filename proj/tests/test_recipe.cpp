#include <gtest/gtest.h>

#include <filesystem>

#include "vislip/recipe.hpp"

using namespace vislip;

namespace {

const SyntheticCorpus& small_corpus() {
    static const SyntheticCorpus sc = [] {
        SyntheticSpec s;
        s.dim = 4;
        s.n_lines = 24;
        s.n_words = 12;
        s.min_words = 3;
        s.max_words = 5;
        s.min_duration = 4;
        s.max_duration = 7;
        s.sil_min = 6;
        s.sil_max = 9;
        return generate_corpus(s);
    }();
    return sc;
}

RecipeConfig fast_config() {
    RecipeConfig c;
    c.n_states = 3;
    c.n_mix = 1;
    c.r1 = 2;
    c.r2 = 1;
    c.r3 = 1;
    c.garbage_threshold = 20;
    c.test_size = 6;
    c.n_folds = 2;
    return c;
}

}  // namespace

TEST(RecipeConfig, ParseFormatRoundTrip) {
    auto c = fast_config();
    c.feature_model = "pca";
    c.lm_scale = 2.5;
    EXPECT_EQ(parse_recipe_config(format_recipe_config(c)), c);
    EXPECT_EQ(parse_recipe_config(""), RecipeConfig{});
    EXPECT_THROW(parse_recipe_config("n_mixtures = 3\n"), ParseError);
    EXPECT_THROW(parse_recipe_config("feature_model = dct\n"), Error);
    EXPECT_THROW(parse_recipe_config("n_states = 0\n"), Error);
    EXPECT_THROW(parse_recipe_config("r1 = -1\n"), ParseError);
    EXPECT_THROW(parse_recipe_config("retained_fraction = 1.5\n"), Error);
}

TEST(Recipe, StagesRunInOrder) {
    const auto& sc = small_corpus();
    const auto folds = make_folds(sc.corpus.size(), 6, 1, 3);
    const auto r = run_fold(fast_config(), sc.corpus, folds.folds[0], 0);
    ASSERT_TRUE(r.ok) << r.error;
    std::vector<std::string> stages;
    for (const auto& t : r.trace) stages.push_back(t.stage);
    EXPECT_EQ(stages, recipe_stages());
    EXPECT_EQ(r.hypotheses.size(), 6u);
    EXPECT_EQ(r.references.size(), 6u);
    EXPECT_EQ(r.alignments.size(), 18u);
    EXPECT_EQ(r.report.N, r.confusion.report().N);
    EXPECT_GT(r.report.accuracy(), 80.0);
    EXPECT_NO_THROW(r.models.validate(1e-9));
    for (const auto* ll : {&r.log_likelihood_r1, &r.log_likelihood_r2, &r.log_likelihood_r3})
        for (std::size_t i = 1; i < ll->size(); ++i)
            EXPECT_GE((*ll)[i], (*ll)[i - 1] - 1e-6 * std::abs((*ll)[i - 1]));
}

TEST(Recipe, PcaFeatureModel) {
    const auto& sc = small_corpus();
    auto cfg = fast_config();
    cfg.feature_model = "pca";
    cfg.retained_fraction = 0.999;
    const auto folds = make_folds(sc.corpus.size(), 6, 1, 3);
    const auto r = run_fold(cfg, sc.corpus, folds.folds[0], 0);
    ASSERT_TRUE(r.ok) << r.error;
    ASSERT_TRUE(r.feature_model.has_value());
    EXPECT_EQ(r.models.feature_dim, r.feature_model->mode_count());
}

TEST(Recipe, StageErrorIsReported) {
    const auto& sc = small_corpus();
    auto cfg = fast_config();
    cfg.garbage_threshold = 1000000;  // every class pooled; nothing trainable remains
    const auto folds = make_folds(sc.corpus.size(), 6, 1, 3);
    const auto r = run_fold(cfg, sc.corpus, folds.folds[0], 0);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.error.rfind("garbage-merge: ", 0), 0u) << r.error;
    EXPECT_NE(format_trace(r).find("error\tgarbage-merge"), std::string::npos);
}

TEST(Recipe, BadFoldIndicesFail) {
    const auto& sc = small_corpus();
    Fold f;
    f.train = {0, 1, 999};
    const auto r = run_fold(fast_config(), sc.corpus, f, 0);
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.error.find("beyond the corpus"), std::string::npos);
    Fold empty;
    EXPECT_FALSE(run_fold(fast_config(), sc.corpus, empty, 0).ok);
}

TEST(Recipe, NoTestLinesSkipsScoring) {
    const auto& sc = small_corpus();
    const auto folds = make_folds(sc.corpus.size(), 0, 1, 3);
    const auto r = run_fold(fast_config(), sc.corpus, folds.folds[0], 0);
    ASSERT_TRUE(r.ok) << r.error;
    EXPECT_EQ(r.trace.back().detail, "no test utterances");
}

TEST(Recipe, JobsDoNotChangeOutputTree) {
    const auto& sc = small_corpus();
    const auto cfg = fast_config();
    const auto folds = make_folds(sc.corpus.size(), cfg.test_size, 3, cfg.seed);
    const auto serial = run_recipe(cfg, sc.corpus, folds, 1);
    const auto parallel = run_recipe(cfg, sc.corpus, folds, 3);
    ASSERT_EQ(serial.results.size(), 3u);
    for (std::size_t f = 0; f < 3; ++f) {
        ASSERT_TRUE(serial.results[f].ok) << serial.results[f].error;
        EXPECT_EQ(serial.results[f].report, parallel.results[f].report);
        EXPECT_EQ(save_model_set(serial.results[f].models), save_model_set(parallel.results[f].models));
    }
    namespace fs = std::filesystem;
    const auto base = fs::temp_directory_path() / "vislip_test_recipe";
    fs::remove_all(base);
    write_run(serial, cfg, base / "a");
    write_run(parallel, cfg, base / "b");
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), base / "a");
        EXPECT_EQ(text::read_file(e.path().string()), text::read_file((base / "b" / rel).string())) << rel;
        ++files;
    }
    EXPECT_GT(files, 20u);
    EXPECT_TRUE(fs::exists(base / "a" / "fold_2" / "confusion.csv"));
    const auto stats = load_fold_stats_csv(text::read_file((base / "a" / "fold_stats.csv").string()));
    ASSERT_EQ(stats.size(), 2u);
    EXPECT_EQ(stats[0].name, "Accuracy");
    EXPECT_EQ(stats[0].stats.n_folds, 3u);
    fs::remove_all(base);
}

TEST(Recipe, FoldSpecMustMatchCorpus) {
    const auto& sc = small_corpus();
    EXPECT_THROW(run_recipe(fast_config(), sc.corpus, make_folds(10, 2, 1, 1)), Error);
}

TEST(Summary, RanksMergedClasses) {
    const auto& sc = small_corpus();
    const auto cfg = fast_config();
    const auto rr = run_recipe(cfg, sc.corpus, make_folds(sc.corpus.size(), cfg.test_size, 2, cfg.seed));
    const auto s = summarize_run(rr);
    ASSERT_EQ(s.fold_stats.size(), 2u);
    EXPECT_FALSE(s.ranking.items.empty());
    EXPECT_EQ(s.ranking.find("sp"), nullptr);
    EXPECT_LE(s.decline.size(), 10u);
    for (std::size_t i = 1; i < s.decline.size(); ++i) EXPECT_GE(s.decline[i - 1].mean, s.decline[i].mean);
}
