#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "vislip/analysis.hpp"
#include "vislip/corpus.hpp"
#include "vislip/decoder.hpp"
#include "vislip/error.hpp"
#include "vislip/hmm.hpp"
#include "vislip/labels.hpp"
#include "vislip/linear_model.hpp"
#include "vislip/lm_network.hpp"
#include "vislip/scoring.hpp"
#include "vislip/text_io.hpp"
#include "vislip/training.hpp"
#include "vislip/viseme_map.hpp"

namespace vislip {

struct RecipeConfig {
    int n_states = 5;
    int n_mix = 5;
    int r1 = 4;
    int r2 = 2;
    int r3 = 2;
    std::size_t garbage_threshold = 150;
    double retained_fraction = 0.95;
    double lm_floor = 1e-3;
    double lm_scale = 1.0;
    double insertion_penalty = 0.0;
    std::uint64_t seed = 1;
    std::size_t test_size = 42;
    std::size_t n_folds = 5;
    std::string feature_model = "none";  // "none" or "pca"

    bool operator==(const RecipeConfig&) const = default;
};

inline RecipeConfig parse_recipe_config(std::string_view contents, RecipeConfig c = {}) {
    for (const auto& kv : text::key_values(contents)) {
        const auto n = kv.line;
        auto i = [&] { return text::parse_int(kv.value, n); };
        auto d = [&] { return text::parse_double(kv.value, n); };
        auto count = [&] {
            const auto v = i();
            if (v < 0) throw ParseError("'" + kv.key + "' must be non-negative", n);
            return v;
        };
        if (kv.key == "n_states") c.n_states = static_cast<int>(i());
        else if (kv.key == "n_mix") c.n_mix = static_cast<int>(i());
        else if (kv.key == "r1") c.r1 = static_cast<int>(count());
        else if (kv.key == "r2") c.r2 = static_cast<int>(count());
        else if (kv.key == "r3") c.r3 = static_cast<int>(count());
        else if (kv.key == "garbage_threshold") c.garbage_threshold = static_cast<std::size_t>(count());
        else if (kv.key == "retained_fraction") c.retained_fraction = d();
        else if (kv.key == "lm_floor") c.lm_floor = d();
        else if (kv.key == "lm_scale") c.lm_scale = d();
        else if (kv.key == "insertion_penalty") c.insertion_penalty = d();
        else if (kv.key == "seed") c.seed = static_cast<std::uint64_t>(count());
        else if (kv.key == "test_size") c.test_size = static_cast<std::size_t>(count());
        else if (kv.key == "n_folds") c.n_folds = static_cast<std::size_t>(count());
        else if (kv.key == "feature_model") c.feature_model = kv.value;
        else throw ParseError("unknown recipe key '" + kv.key + "'", n);
    }
    if (c.n_states < 1 || c.n_mix < 1) throw Error("n_states and n_mix must be positive");
    if (c.feature_model != "none" && c.feature_model != "pca")
        throw Error("feature_model must be 'none' or 'pca'");
    if (!(c.retained_fraction > 0.0 && c.retained_fraction <= 1.0))
        throw Error("retained_fraction must lie in (0, 1]");
    return c;
}

inline std::string format_recipe_config(const RecipeConfig& c) {
    return "n_states = " + std::to_string(c.n_states) + "\nn_mix = " + std::to_string(c.n_mix) +
           "\nr1 = " + std::to_string(c.r1) + "\nr2 = " + std::to_string(c.r2) + "\nr3 = " + std::to_string(c.r3) +
           "\ngarbage_threshold = " + std::to_string(c.garbage_threshold) +
           "\nretained_fraction = " + text::format_double(c.retained_fraction) +
           "\nlm_floor = " + text::format_double(c.lm_floor) + "\nlm_scale = " + text::format_double(c.lm_scale) +
           "\ninsertion_penalty = " + text::format_double(c.insertion_penalty) + "\nseed = " + std::to_string(c.seed) +
           "\ntest_size = " + std::to_string(c.test_size) + "\nn_folds = " + std::to_string(c.n_folds) +
           "\nfeature_model = " + c.feature_model + "\n";
}

/// Stage names in execution order.
inline const std::vector<std::string>& recipe_stages() {
    static const std::vector<std::string> stages = {
        "viseme-transcripts", "garbage-merge", "feature-model", "flat-start",     "reestimate-r1", "tie-sil-sp",
        "reestimate-r2",      "force-align",   "reestimate-r3", "bigram-network", "decode",        "score"};
    return stages;
}

struct StageRecord {
    std::string stage;
    std::string detail;

    bool operator==(const StageRecord&) const = default;
};

struct FoldResult {
    std::size_t fold = 0;
    bool ok = false;
    std::string error;  // "<stage>: <message>" when !ok
    std::vector<StageRecord> trace;
    std::vector<std::string> warnings;
    VisemeMap map;
    std::optional<LinearModel> feature_model;
    ModelSet models;
    WordNetwork network;
    std::vector<double> log_likelihood_r1, log_likelihood_r2, log_likelihood_r3;
    std::vector<LabelBlock> alignments;  // training utterances, after forced alignment
    std::vector<LabelBlock> hypotheses;  // test utterances
    std::vector<LabelBlock> references;  // test utterances
    ScoreReport report;
    ConfusionMatrix confusion;
};

struct RecipeResult {
    FoldSpec folds;
    std::vector<FoldResult> results;
};

namespace detail {

/// Silence around the first-pronunciation visemes of the words; optional
/// short pauses between words.
inline std::vector<std::string> word_labels(const PronunciationDict& dict, const VisemeMap& map,
                                            std::span<const std::string> words, std::string_view sp) {
    const auto sil = map.silence_id();
    std::vector<std::string> out{sil};
    for (std::size_t w = 0; w < words.size(); ++w) {
        if (w > 0 && !sp.empty()) out.emplace_back(sp);
        for (const auto& p : dict.first(words[w])) out.push_back(map.map_phoneme(p));
    }
    out.push_back(sil);
    return out;
}

inline std::string join(const std::vector<std::string>& v, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(sep) : "") + v[i];
    return out;
}

inline std::string format_ll(const std::vector<double>& ll) {
    std::string out;
    for (std::size_t i = 0; i < ll.size(); ++i) out += (i ? " " : "") + text::format_double(ll[i]);
    return out;
}

}  // namespace detail

/// One cross-validation fold of the full recipe. Errors abort this fold only
/// and are reported with the failing stage.
inline FoldResult run_fold(const RecipeConfig& cfg, const Corpus& corpus, const Fold& fold, std::size_t index) {
    FoldResult r;
    r.fold = index;
    std::string stage;
    auto begin = [&](const std::string& s) { stage = s; };
    auto done = [&](std::string detail) { r.trace.push_back({stage, std::move(detail)}); };
    try {
        for (auto u : fold.test)
            if (u >= corpus.size()) throw Error("fold references line " + std::to_string(u) + " beyond the corpus");
        for (auto u : fold.train)
            if (u >= corpus.size()) throw Error("fold references line " + std::to_string(u) + " beyond the corpus");
        if (fold.train.empty()) throw Error("fold has no training lines");

        begin("viseme-transcripts");
        const auto sp = std::string(kShortPausePhone);
        std::vector<Transcript> train_vis;
        for (auto u : fold.train)
            train_vis.push_back(Transcript::from_labels(
                detail::word_labels(corpus.dict, corpus.map, corpus.utterances[u].words, "")));
        done(std::to_string(train_vis.size()) + " training transcripts");

        begin("garbage-merge");
        const auto counts = count_visemes(train_vis, corpus.map);
        r.map = apply_garbage_threshold(corpus.map, counts, cfg.garbage_threshold);
        {
            std::vector<std::string> merged;
            for (const auto& id : corpus.map.ids())
                if (!r.map.has_class(id)) merged.push_back(id);
            done("threshold " + std::to_string(cfg.garbage_threshold) + "; merged [" + detail::join(merged) + "]");
        }
        const auto& map = r.map;
        const auto sil = map.silence_id();
        if (sil.empty()) throw Error("viseme map has no silence class");
        const bool have_sp = map.has_class(sp);
        const auto vdict = make_viseme_dict(corpus.dict, map);

        begin("feature-model");
        std::vector<ObservationMatrix> frames(corpus.size());
        if (cfg.feature_model == "pca") {
            Eigen::Index rows = 0;
            for (auto u : fold.train) rows += corpus.utterances[u].features.frames.rows();
            ObservationMatrix stacked(rows, corpus.utterances[fold.train.front()].features.dim());
            Eigen::Index at = 0;
            for (auto u : fold.train) {
                const auto& f = corpus.utterances[u].features.frames;
                if (f.cols() != stacked.cols()) throw DimensionError("training frames disagree on dimension");
                stacked.middleRows(at, f.rows()) = f;
                at += f.rows();
            }
            r.feature_model = train_linear_model(stacked, cfg.retained_fraction);
            for (std::size_t u = 0; u < corpus.size(); ++u)
                frames[u] = project_rows(*r.feature_model, corpus.utterances[u].features.frames);
            done("pca " + std::to_string(r.feature_model->modes.cols()) + " modes");
        } else {
            for (std::size_t u = 0; u < corpus.size(); ++u) frames[u] = corpus.utterances[u].features.frames;
            done("none");
        }

        std::vector<ObservationMatrix> train_frames;
        std::vector<std::vector<std::string>> labels_plain, labels_sp;
        for (auto u : fold.train) {
            train_frames.push_back(frames[u]);
            labels_plain.push_back(detail::word_labels(corpus.dict, map, corpus.utterances[u].words, ""));
            labels_sp.push_back(detail::word_labels(corpus.dict, map, corpus.utterances[u].words, have_sp ? sp : ""));
        }

        begin("flat-start");
        const auto ids = map.ids();
        auto fs = flat_start(ids, cfg.n_states, cfg.n_mix, train_frames);
        r.models = std::move(fs.models);
        r.warnings.insert(r.warnings.end(), fs.warnings.begin(), fs.warnings.end());
        done(std::to_string(ids.size()) + " models, " + std::to_string(cfg.n_states) + " states, " +
             std::to_string(cfg.n_mix) + " mixtures");

        auto reestimate_stage = [&](const std::string& name, int iterations,
                                    const std::vector<std::vector<std::string>>& labels, std::vector<double>& ll) {
            begin(name);
            if (iterations == 0) {
                done("0 iterations");
                return;
            }
            BaumWelchOptions opt;
            opt.iterations = iterations;
            auto bw = baum_welch(std::move(r.models), train_frames, labels, opt);
            r.models = std::move(bw.models);
            ll = bw.log_likelihood;
            for (auto& w : bw.warnings) r.warnings.push_back(name + ": " + w);
            done(std::to_string(iterations) + " iterations on " + std::to_string(bw.used_utterances) +
                 " utterances; log-likelihood " + detail::format_ll(ll));
        };

        reestimate_stage("reestimate-r1", cfg.r1, labels_plain, r.log_likelihood_r1);

        begin("tie-sil-sp");
        if (have_sp) {
            r.models = tie_silence_models(std::move(r.models), sil, sp);
            done(sp + " shares state " + std::to_string(cfg.n_states / 2 + 1) + " of " + sil);
        } else {
            done("no short-pause class");
        }

        reestimate_stage("reestimate-r2", cfg.r2, labels_sp, r.log_likelihood_r2);

        begin("force-align");
        NetworkOptions nopt{sil, have_sp ? sp : ""};
        std::vector<ObservationMatrix> aligned_frames;
        std::vector<std::vector<std::string>> aligned_labels;
        for (std::size_t k = 0; k < fold.train.size(); ++k) {
            const auto& utt = corpus.utterances[fold.train[k]];
            try {
                auto res = force_align(r.models, train_frames[k], utt.words, vdict, nopt);
                r.alignments.push_back({utt.id, res.transcript()});
                aligned_frames.push_back(train_frames[k]);
                aligned_labels.push_back(res.labels_without(""));
            } catch (const DecodeError& e) {
                r.warnings.push_back("force-align: " + utt.id + " dropped: " + e.what());
            }
        }
        if (aligned_labels.empty()) throw Error("no training utterance could be aligned");
        done(std::to_string(aligned_labels.size()) + " of " + std::to_string(fold.train.size()) + " aligned");

        {
            std::swap(train_frames, aligned_frames);
            reestimate_stage("reestimate-r3", cfg.r3, aligned_labels, r.log_likelihood_r3);
        }

        begin("bigram-network");
        std::vector<std::vector<std::string>> train_words;
        for (auto u : fold.train) train_words.push_back(corpus.utterances[u].words);
        std::vector<std::string> vocab;
        for (const auto& [w, v] : corpus.dict.entries()) vocab.push_back(w);
        const auto lm = estimate_bigram(train_words, cfg.lm_floor, vocab);
        r.network = build_network(lm, vdict, nopt);
        done(std::to_string(r.network.nodes.size() - 2) + " words, " + std::to_string(r.network.arcs.size()) +
             " arcs");

        begin("decode");
        DecodeOptions dopt{cfg.lm_scale, cfg.insertion_penalty};
        std::vector<LabelAlignment> scored;
        std::size_t failures = 0;
        for (auto u : fold.test) {
            const auto& utt = corpus.utterances[u];
            Transcript hyp;
            try {
                hyp = viterbi_decode(r.models, r.network, frames[u], dopt).transcript();
            } catch (const DecodeError& e) {
                ++failures;
                r.warnings.push_back("decode: " + utt.id + ": " + e.what());
            }
            r.hypotheses.push_back({utt.id, hyp});
            r.references.push_back(
                {utt.id, Transcript::from_labels(detail::word_labels(corpus.dict, map, utt.words, ""))});
        }
        done(std::to_string(fold.test.size()) + " test utterances, " + std::to_string(failures) + " failed");

        begin("score");
        if (fold.test.empty()) {
            done("no test utterances");
            r.ok = true;
            return r;
        }
        std::vector<std::string> scored_labels;
        for (const auto& id : ids)
            if (id != sp) scored_labels.push_back(id);
        for (std::size_t k = 0; k < r.hypotheses.size(); ++k) {
            std::vector<std::string> hyp;
            for (const auto& unit : r.hypotheses[k].transcript.units)
                if (unit.label != sp) hyp.push_back(unit.label);
            scored.push_back(align_labels(r.references[k].transcript.labels(), hyp));
        }
        r.report = score(scored);
        r.confusion = confusion(scored, scored_labels);
        done(format_score(r.report));
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = (stage.empty() ? std::string("setup") : stage) + ": " + e.what();
    }
    return r;
}

/// Runs every fold; `jobs` folds at a time. Results are stored in fold order
/// and each fold is computed sequentially, so `jobs` does not change them.
inline RecipeResult run_recipe(const RecipeConfig& cfg, const Corpus& corpus, const FoldSpec& folds, int jobs = 1) {
    RecipeResult out;
    out.folds = folds;
    out.results.resize(folds.folds.size());
    if (folds.n_lines != corpus.size())
        throw Error("fold spec covers " + std::to_string(folds.n_lines) + " lines, corpus has " +
                    std::to_string(corpus.size()));
    const std::size_t n = folds.folds.size();
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t f = 0; f < n; ++f) out.results[f] = run_fold(cfg, corpus, folds.folds[f], f);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t f = next++; f < n; f = next++) out.results[f] = run_fold(cfg, corpus, folds.folds[f], f);
        });
    for (auto& t : pool) t.join();
    return out;
}

/// Accuracy and correctness across successful folds, ranking and decline
/// curve of the per-fold inverse recognition probabilities.
struct RunSummary {
    std::vector<NamedFoldStatistics> fold_stats;
    std::vector<VisemeProbability> probabilities;
    RankingResult ranking;
    std::vector<DeclinePoint> decline;
};

inline RunSummary summarize_run(const RecipeResult& rr, std::size_t top_k = 10, double tie_epsilon = 0.005) {
    RunSummary s;
    std::vector<double> acc, corr;
    std::vector<ConfusionMatrix> cms;
    for (const auto& f : rr.results) {
        if (!f.ok) continue;
        acc.push_back(f.report.accuracy());
        corr.push_back(f.report.correctness());
        cms.push_back(f.confusion);
    }
    if (acc.size() >= 2) {
        s.fold_stats.push_back({"Accuracy", fold_stats(acc)});
        s.fold_stats.push_back({"Correctness", fold_stats(corr)});
    }
    if (!cms.empty()) {
        s.probabilities = viseme_probabilities(cms);
        s.ranking = rank_visemes(s.probabilities, tie_epsilon);
        std::size_t defined = 0;
        for (const auto& p : s.probabilities) defined += p.defined;
        s.decline = decline_curve(s.probabilities, std::min(top_k, defined));
    }
    return s;
}

inline std::string format_trace(const FoldResult& f) {
    std::string out;
    for (const auto& t : f.trace) out += t.stage + "\t" + t.detail + "\n";
    if (!f.ok) out += "error\t" + f.error + "\n";
    return out;
}

/// Writes the full output tree of a run. Contents depend only on the inputs.
inline void write_run(const RecipeResult& rr, const RecipeConfig& cfg, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto put = [&](const fs::path& p, std::string_view s) { text::write_file(p.string(), s); };
    put(dir / "config.txt", format_recipe_config(cfg));
    put(dir / "folds.txt", save_folds(rr.folds));
    std::string scores, trace;
    for (const auto& f : rr.results) {
        const auto fd = dir / ("fold_" + std::to_string(f.fold));
        fs::create_directories(fd);
        put(fd / "trace.txt", format_trace(f));
        trace += "# fold " + std::to_string(f.fold) + "\n" + format_trace(f);
        std::string warnings;
        for (const auto& w : f.warnings) warnings += w + "\n";
        put(fd / "warnings.txt", warnings);
        if (!f.ok) {
            put(fd / "error.txt", f.error + "\n");
            scores += "fold " + std::to_string(f.fold) + " FAILED " + f.error + "\n";
            continue;
        }
        put(fd / "viseme_map.txt", save_viseme_map(f.map));
        put(fd / "models.txt", save_model_set(f.models));
        put(fd / "network.txt", save_network(f.network));
        if (f.feature_model) put(fd / "feature_model.txt", save_linear_model(*f.feature_model));
        put(fd / "aligned.lab", save_labels(f.alignments));
        put(fd / "hyp.lab", save_labels(f.hypotheses));
        put(fd / "ref.lab", save_labels(f.references));
        put(fd / "score.txt", format_score(f.report) + "\n");
        put(fd / "confusion.csv", save_confusion_csv(f.confusion));
        put(fd / "loglik.txt", "r1 " + detail::format_ll(f.log_likelihood_r1) + "\nr2 " +
                                   detail::format_ll(f.log_likelihood_r2) + "\nr3 " +
                                   detail::format_ll(f.log_likelihood_r3) + "\n");
        scores += "fold " + std::to_string(f.fold) + " " + format_score(f.report) + "\n";
    }
    put(dir / "scores.txt", scores);
    put(dir / "trace.txt", trace);
    const auto s = summarize_run(rr);
    put(dir / "fold_stats.csv", save_fold_stats_csv(s.fold_stats));
    put(dir / "fold_stats.txt", format_fold_stats_table(s.fold_stats));
    put(dir / "ranking.csv", save_ranking_csv(s.ranking));
    put(dir / "decline.csv", save_decline_csv(s.decline));
    put(dir / "decline.dat", save_decline_dat(s.decline));
    std::string summary = "folds " + std::to_string(rr.results.size()) + "\n";
    std::size_t ok = 0;
    for (const auto& f : rr.results) ok += f.ok;
    summary += "succeeded " + std::to_string(ok) + "\n" + scores;
    summary += format_fold_stats_table(s.fold_stats);
    summary += "ranking " + s.ranking.format() + "\n";
    put(dir / "summary.txt", summary);
}

}  // namespace vislip
