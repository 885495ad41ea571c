#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/features.hpp"
#include "vislip/labels.hpp"
#include "vislip/rng.hpp"
#include "vislip/text_io.hpp"
#include "vislip/viseme_map.hpp"

namespace vislip {

// ---------------------------------------------------------------- folds

struct Fold {
    std::vector<std::size_t> test;   // sorted
    std::vector<std::size_t> train;  // sorted complement of test

    bool operator==(const Fold&) const = default;
};

struct FoldSpec {
    std::size_t n_lines = 0;
    std::uint64_t seed = 0;
    std::vector<Fold> folds;

    bool operator==(const FoldSpec&) const = default;
};

/// Each fold draws `test_size` distinct lines uniformly at random; folds are
/// drawn independently of one another, so they may share lines.
inline FoldSpec make_folds(std::size_t n_lines, std::size_t test_size, std::size_t n_folds, std::uint64_t seed) {
    if (test_size >= n_lines)
        throw Error("test size " + std::to_string(test_size) + " must be below the line count " +
                    std::to_string(n_lines));
    if (n_folds < 1) throw Error("need at least one fold");
    FoldSpec spec{n_lines, seed, {}};
    Rng rng(seed);
    for (std::size_t f = 0; f < n_folds; ++f) {
        std::vector<std::size_t> idx(n_lines);
        for (std::size_t i = 0; i < n_lines; ++i) idx[i] = i;
        for (std::size_t i = 0; i < test_size; ++i) std::swap(idx[i], idx[i + rng.index(n_lines - i)]);
        Fold fold;
        fold.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(test_size));
        std::sort(fold.test.begin(), fold.test.end());
        for (std::size_t i = 0; i < n_lines; ++i)
            if (!std::binary_search(fold.test.begin(), fold.test.end(), i)) fold.train.push_back(i);
        spec.folds.push_back(std::move(fold));
    }
    return spec;
}

namespace detail {

inline std::string join_indices(const std::vector<std::size_t>& v) {
    std::string out;
    for (auto i : v) out += " " + std::to_string(i);
    return out;
}

}  // namespace detail

inline std::string save_folds(const FoldSpec& spec) {
    std::string out = "n_lines " + std::to_string(spec.n_lines) + "\nseed " + std::to_string(spec.seed) +
                      "\nfolds " + std::to_string(spec.folds.size()) + "\n";
    for (std::size_t f = 0; f < spec.folds.size(); ++f) {
        out += "test " + std::to_string(f) + detail::join_indices(spec.folds[f].test) + "\n";
        out += "train " + std::to_string(f) + detail::join_indices(spec.folds[f].train) + "\n";
    }
    return out;
}

inline FoldSpec load_folds(std::string_view contents) {
    const auto ls = text::lines(contents);
    FoldSpec spec;
    auto header = [&](std::size_t i, std::string_view key) {
        if (i >= ls.size()) throw ParseError("fold file truncated", i + 1);
        auto t = text::split_ws(ls[i]);
        if (t.size() != 2 || t[0] != key) throw ParseError("expected '" + std::string(key) + " <n>'", i + 1);
        return text::parse_int(t[1], i + 1);
    };
    spec.n_lines = static_cast<std::size_t>(header(0, "n_lines"));
    spec.seed = static_cast<std::uint64_t>(header(1, "seed"));
    const auto n = static_cast<std::size_t>(header(2, "folds"));
    auto list = [&](std::size_t i, std::string_view key, std::size_t f) {
        if (i >= ls.size()) throw ParseError("fold file truncated", i + 1);
        auto t = text::split_ws(ls[i]);
        if (t.size() < 2 || t[0] != key || text::parse_int(t[1], i + 1) != static_cast<long long>(f))
            throw ParseError("expected '" + std::string(key) + " " + std::to_string(f) + " ...'", i + 1);
        std::vector<std::size_t> v;
        for (std::size_t k = 2; k < t.size(); ++k) {
            const auto x = text::parse_int(t[k], i + 1);
            if (x < 0 || static_cast<std::size_t>(x) >= spec.n_lines) throw ParseError("line index out of range", i + 1);
            v.push_back(static_cast<std::size_t>(x));
        }
        return v;
    };
    for (std::size_t f = 0; f < n; ++f) {
        Fold fold;
        fold.test = list(3 + 2 * f, "test", f);
        fold.train = list(4 + 2 * f, "train", f);
        spec.folds.push_back(std::move(fold));
    }
    return spec;
}

// --------------------------------------------------------------- corpus

struct Utterance {
    std::string id;
    FeatureFrames features;
    std::vector<std::string> words;
    Transcript truth;  // timed viseme labels when known (synthetic data)

    bool operator==(const Utterance& o) const {
        return id == o.id && words == o.words && truth == o.truth && features.rate == o.features.rate &&
               features.frames.rows() == o.features.frames.rows() &&
               features.frames.cols() == o.features.frames.cols() && features.frames == o.features.frames;
    }
};

struct Corpus {
    VisemeMap map;
    PronunciationDict dict;
    std::vector<Utterance> utterances;

    std::size_t size() const { return utterances.size(); }
};

/// Word transcripts, one utterance per line: `id WORD WORD ...`.
inline std::string save_word_transcripts(const std::vector<Utterance>& utts) {
    std::string out;
    for (const auto& u : utts) {
        out += u.id;
        for (const auto& w : u.words) out += " " + w;
        out += "\n";
    }
    return out;
}

inline std::vector<std::pair<std::string, std::vector<std::string>>> load_word_transcripts(std::string_view contents) {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    std::size_t n = 0;
    for (const auto& raw : text::lines(contents)) {
        ++n;
        auto toks = text::split_ws(raw);
        if (toks.empty() || toks[0].starts_with('#')) continue;
        std::vector<std::string> words;
        for (std::size_t i = 1; i < toks.size(); ++i) words.push_back(text::to_upper(toks[i]));
        out.emplace_back(toks[0], std::move(words));
    }
    return out;
}

/// Manifest written next to the corpus files; paths are relative to it.
///
///     viseme_map = viseme_map.txt
///     dictionary = dictionary.txt
///     transcripts = transcripts.txt
///     labels = labels.txt
///     utterance = u0000 features/u0000.feat
struct Manifest {
    std::string viseme_map;
    std::string dictionary;
    std::string transcripts;
    std::string labels;  // optional
    std::string inventory;  // optional
    std::vector<std::pair<std::string, std::string>> utterances;  // id, feature path
};

inline std::string save_manifest(const Manifest& m) {
    std::string out = "viseme_map = " + m.viseme_map + "\ndictionary = " + m.dictionary +
                      "\ntranscripts = " + m.transcripts + "\n";
    if (!m.labels.empty()) out += "labels = " + m.labels + "\n";
    if (!m.inventory.empty()) out += "inventory = " + m.inventory + "\n";
    for (const auto& [id, path] : m.utterances) out += "utterance = " + id + " " + path + "\n";
    return out;
}

inline Manifest load_manifest(std::string_view contents) {
    Manifest m;
    for (const auto& kv : text::key_values(contents)) {
        if (kv.key == "viseme_map") m.viseme_map = kv.value;
        else if (kv.key == "dictionary") m.dictionary = kv.value;
        else if (kv.key == "transcripts") m.transcripts = kv.value;
        else if (kv.key == "labels") m.labels = kv.value;
        else if (kv.key == "inventory") m.inventory = kv.value;
        else if (kv.key == "utterance") {
            auto t = text::split_ws(kv.value);
            if (t.size() != 2) throw ParseError("utterance entries read 'id path'", kv.line);
            m.utterances.emplace_back(t[0], t[1]);
        } else {
            throw ParseError("unknown manifest key '" + kv.key + "'", kv.line);
        }
    }
    if (m.viseme_map.empty() || m.dictionary.empty() || m.transcripts.empty())
        throw ParseError("manifest needs viseme_map, dictionary and transcripts");
    return m;
}

/// Writes the corpus under `dir` and returns the manifest path.
inline std::filesystem::path write_corpus(const Corpus& c, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "features");
    Manifest m{"viseme_map.txt", "dictionary.txt", "transcripts.txt", "labels.txt", "inventory.txt", {}};
    std::string inv;
    for (const auto& s : c.map.inventory().symbols()) inv += s + "\n";
    text::write_file((dir / m.inventory).string(), inv);
    text::write_file((dir / m.viseme_map).string(), save_viseme_map(c.map));
    text::write_file((dir / m.dictionary).string(), save_dictionary(c.dict));
    text::write_file((dir / m.transcripts).string(), save_word_transcripts(c.utterances));
    std::vector<LabelBlock> blocks;
    for (const auto& u : c.utterances) {
        blocks.push_back({u.id, u.truth});
        const std::string rel = "features/" + u.id + ".feat";
        text::write_file((dir / rel).string(), save_features(u.features));
        m.utterances.emplace_back(u.id, rel);
    }
    text::write_file((dir / m.labels).string(), save_labels(blocks));
    const auto manifest = dir / "manifest.txt";
    text::write_file(manifest.string(), save_manifest(m));
    return manifest;
}

inline Corpus read_corpus(const std::filesystem::path& manifest_path) {
    const auto base = manifest_path.parent_path();
    const auto m = load_manifest(text::read_file(manifest_path.string()));
    auto path = [&](const std::string& rel) { return (base / rel).string(); };
    Corpus c;
    std::optional<Inventory> inv;
    if (!m.inventory.empty()) inv = Inventory::load(text::read_file(path(m.inventory)));
    c.map = load_viseme_map(text::read_file(path(m.viseme_map)), inv ? &*inv : nullptr);
    c.dict = load_dictionary(text::read_file(path(m.dictionary)), c.map.inventory());
    const auto transcripts = load_word_transcripts(text::read_file(path(m.transcripts)));
    std::map<std::string, std::vector<std::string>> words(transcripts.begin(), transcripts.end());
    std::map<std::string, Transcript> truth;
    if (!m.labels.empty())
        for (auto& b : load_labels(text::read_file(path(m.labels)))) truth[b.id] = std::move(b.transcript);
    for (const auto& [id, rel] : m.utterances) {
        Utterance u;
        u.id = id;
        u.features = load_features(text::read_file(path(rel)));
        auto w = words.find(id);
        if (w == words.end()) throw Error("utterance '" + id + "' has no word transcript");
        u.words = w->second;
        if (auto t = truth.find(id); t != truth.end()) u.truth = t->second;
        c.utterances.push_back(std::move(u));
    }
    return c;
}

// ------------------------------------------------------------ synthesis

/// Generative description of a synthetic corpus. Every viseme class emits
/// from one diagonal Gaussian; class means are drawn at least
/// `separation` standard deviations apart.
struct SyntheticSpec {
    VisemeMap map = table2_map();
    int dim = 10;
    double sigma = 1.0;
    double separation = 5.0;
    std::vector<std::string> rare_classes = {"v08", "v09", "v14", "v15"};
    double rare_weight = 0.1;  // selection weight relative to 1 for common classes
    int min_duration = 6;       // frames per viseme segment
    int max_duration = 12;
    int sil_min = 10;  // leading and trailing silence
    int sil_max = 20;
    double pause_prob = 0.0;  // short silence between words
    int pause_min = 2;
    int pause_max = 4;
    int n_words = 40;
    int min_phones = 3;
    int max_phones = 6;
    std::size_t n_lines = 108;
    int min_words = 8;
    int max_words = 12;
    double frame_rate = 60.0;
    std::uint64_t seed = 1;
};

/// Reads `key = value` overrides on top of the defaults. The map stays the
/// built-in one unless replaced by the caller.
inline SyntheticSpec parse_synthetic_spec(std::string_view contents, SyntheticSpec s = {}) {
    for (const auto& kv : text::key_values(contents)) {
        const auto n = kv.line;
        auto i = [&] { return static_cast<int>(text::parse_int(kv.value, n)); };
        auto d = [&] { return text::parse_double(kv.value, n); };
        if (kv.key == "dim") s.dim = i();
        else if (kv.key == "sigma") s.sigma = d();
        else if (kv.key == "separation") s.separation = d();
        else if (kv.key == "rare_classes") s.rare_classes = text::split_ws(kv.value);
        else if (kv.key == "rare_weight") s.rare_weight = d();
        else if (kv.key == "min_duration") s.min_duration = i();
        else if (kv.key == "max_duration") s.max_duration = i();
        else if (kv.key == "sil_min") s.sil_min = i();
        else if (kv.key == "sil_max") s.sil_max = i();
        else if (kv.key == "pause_prob") s.pause_prob = d();
        else if (kv.key == "pause_min") s.pause_min = i();
        else if (kv.key == "pause_max") s.pause_max = i();
        else if (kv.key == "n_words") s.n_words = i();
        else if (kv.key == "min_phones") s.min_phones = i();
        else if (kv.key == "max_phones") s.max_phones = i();
        else if (kv.key == "n_lines") s.n_lines = static_cast<std::size_t>(text::parse_int(kv.value, n));
        else if (kv.key == "min_words") s.min_words = i();
        else if (kv.key == "max_words") s.max_words = i();
        else if (kv.key == "frame_rate") s.frame_rate = d();
        else if (kv.key == "seed") s.seed = static_cast<std::uint64_t>(text::parse_int(kv.value, n));
        else throw ParseError("unknown synthesis key '" + kv.key + "'", n);
    }
    return s;
}

inline std::string format_synthetic_spec(const SyntheticSpec& s) {
    std::string rare;
    for (const auto& r : s.rare_classes) rare += (rare.empty() ? "" : " ") + r;
    return "dim = " + std::to_string(s.dim) + "\nsigma = " + text::format_double(s.sigma) +
           "\nseparation = " + text::format_double(s.separation) + "\nrare_classes = " + rare +
           "\nrare_weight = " + text::format_double(s.rare_weight) + "\nmin_duration = " +
           std::to_string(s.min_duration) + "\nmax_duration = " + std::to_string(s.max_duration) +
           "\nsil_min = " + std::to_string(s.sil_min) + "\nsil_max = " + std::to_string(s.sil_max) +
           "\npause_prob = " + text::format_double(s.pause_prob) + "\npause_min = " + std::to_string(s.pause_min) +
           "\npause_max = " + std::to_string(s.pause_max) + "\nn_words = " + std::to_string(s.n_words) +
           "\nmin_phones = " + std::to_string(s.min_phones) + "\nmax_phones = " + std::to_string(s.max_phones) +
           "\nn_lines = " + std::to_string(s.n_lines) + "\nmin_words = " + std::to_string(s.min_words) +
           "\nmax_words = " + std::to_string(s.max_words) + "\nframe_rate = " + text::format_double(s.frame_rate) +
           "\nseed = " + std::to_string(s.seed) + "\n";
}

struct SyntheticCorpus {
    Corpus corpus;
    std::map<std::string, Eigen::VectorXd> class_means;  // ground-truth emission means
    double sigma = 1.0;
};

namespace detail {

inline void validate_spec(const SyntheticSpec& s) {
    if (s.dim < 1) throw Error("synthetic feature dimension must be positive");
    if (!(s.sigma > 0.0)) throw Error("synthetic sigma must be positive");
    if (s.separation < 0.0) throw Error("class separation must be non-negative");
    if (s.min_duration < 1 || s.max_duration < s.min_duration)
        throw Error("degenerate viseme duration range [" + std::to_string(s.min_duration) + ", " +
                    std::to_string(s.max_duration) + "]");
    if (s.sil_min < 1 || s.sil_max < s.sil_min) throw Error("degenerate silence duration range");
    if (s.pause_prob < 0.0 || s.pause_prob > 1.0) throw Error("pause probability must lie in [0, 1]");
    if (s.pause_prob > 0.0 && (s.pause_min < 1 || s.pause_max < s.pause_min))
        throw Error("degenerate pause duration range");
    if (s.n_words < 1 || s.min_phones < 1 || s.max_phones < s.min_phones) throw Error("degenerate word grammar");
    if (s.min_words < 1 || s.max_words < s.min_words) throw Error("degenerate line grammar");
    if (s.rare_weight < 0.0) throw Error("rare weight must be non-negative");
    if (s.map.silence_id().empty()) throw Error("synthetic map needs a silence class");
}

/// Means at least `sep * sigma` apart, by rejection inside a box that grows
/// when it gets crowded.
inline std::vector<Eigen::VectorXd> separated_means(std::size_t k, int dim, double sep, double sigma, Rng& rng) {
    std::vector<Eigen::VectorXd> means;
    double half = std::max(1.0, sep * sigma);
    while (means.size() < k) {
        bool placed = false;
        for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
            Eigen::VectorXd m(dim);
            for (int d = 0; d < dim; ++d) m[d] = rng.uniform(-half, half);
            bool ok = true;
            for (const auto& o : means)
                if ((o - m).norm() < sep * sigma) {
                    ok = false;
                    break;
                }
            if (ok) {
                means.push_back(std::move(m));
                placed = true;
            }
        }
        if (!placed) half *= 1.25;
    }
    return means;
}

}  // namespace detail

/// Samples a corpus from the generative models of `spec`. Utterances are
/// silence, words (each phone a viseme segment, optional short silences
/// between words), silence; ground-truth timed viseme labels are kept.
inline SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
    detail::validate_spec(spec);
    Rng rng(spec.seed);
    SyntheticCorpus out;
    out.sigma = spec.sigma;
    Corpus& c = out.corpus;
    c.map = spec.map;
    const std::string sil_id = spec.map.silence_id();
    const std::string sp_id = spec.map.short_pause_id();

    std::vector<const VisemeClass*> speech;
    for (const auto& cls : spec.map.classes())
        if (cls.id != sil_id && cls.id != sp_id) speech.push_back(&cls);
    if (speech.empty()) throw Error("synthetic map has no speech classes");

    const auto means = detail::separated_means(speech.size() + 1, spec.dim, spec.separation, spec.sigma, rng);
    for (std::size_t k = 0; k < speech.size(); ++k) out.class_means[speech[k]->id] = means[k];
    out.class_means[sil_id] = means.back();

    // Common classes are dealt from a shuffled bag so the vocabulary covers
    // them evenly; rare classes are slipped in with their relative weight.
    std::vector<const VisemeClass*> common, rare;
    for (const auto* cls : speech) {
        const bool is_rare =
            std::find(spec.rare_classes.begin(), spec.rare_classes.end(), cls->id) != spec.rare_classes.end();
        (is_rare ? rare : common).push_back(cls);
    }
    const double rare_mass = spec.rare_weight * static_cast<double>(rare.size());
    const double p_rare = common.empty() ? 1.0 : rare_mass / (rare_mass + static_cast<double>(common.size()));
    if (common.empty() && !(rare_mass > 0.0)) throw Error("no speech class has positive selection weight");
    std::vector<const VisemeClass*> bag;
    auto pick_class = [&]() -> const VisemeClass* {
        if (!rare.empty() && rng.uniform() < p_rare) return rare[rng.index(rare.size())];
        if (bag.empty()) {
            bag = common;
            for (std::size_t i = bag.size(); i > 1; --i) std::swap(bag[i - 1], bag[rng.index(i)]);
        }
        const auto* c = bag.back();
        bag.pop_back();
        return c;
    };

    // Vocabulary: first pronunciation of each word is what gets spoken.
    std::vector<std::string> vocab;
    std::vector<std::vector<std::string>> prons;
    for (int w = 0; w < spec.n_words; ++w) {
        char name[16];
        std::snprintf(name, sizeof name, "W%03d", w);
        std::vector<std::string> pron;
        const auto len = rng.between(spec.min_phones, spec.max_phones);
        for (long long p = 0; p < len; ++p) {
            const auto* cls = pick_class();
            pron.push_back(cls->phonemes[rng.index(cls->phonemes.size())]);
        }
        vocab.emplace_back(name);
        prons.push_back(std::move(pron));
    }

    // Every rare class gets at least one slot in the vocabulary.
    for (const auto* cls : rare) {
        bool present = false;
        for (const auto& pron : prons)
            for (const auto& ph : pron) present = present || spec.map.map_phoneme(ph) == cls->id;
        if (present || !(spec.rare_weight > 0.0)) continue;
        const auto w = rng.index(prons.size());
        auto& slot = prons[w][rng.index(prons[w].size())];
        slot = cls->phonemes[rng.index(cls->phonemes.size())];
    }
    for (std::size_t w = 0; w < vocab.size(); ++w) c.dict.add(vocab[w], prons[w]);

    auto emit = [&](ObservationMatrix& frames, Eigen::Index& t, const Eigen::VectorXd& mean, long long n) {
        for (long long i = 0; i < n; ++i, ++t)
            for (int d = 0; d < spec.dim; ++d) frames(t, d) = mean[d] + spec.sigma * rng.normal();
    };

    for (std::size_t line = 0; line < spec.n_lines; ++line) {
        Utterance u;
        char id[16];
        std::snprintf(id, sizeof id, "u%04zu", line);
        u.id = id;
        const auto n_words = rng.between(spec.min_words, spec.max_words);
        std::vector<std::size_t> chosen;
        for (long long w = 0; w < n_words; ++w) chosen.push_back(rng.index(vocab.size()));

        // Durations first, so the frame matrix is allocated once.
        struct Segment {
            std::string label;
            long long frames;
            int word;
        };
        std::vector<Segment> segs;
        segs.push_back({sil_id, rng.between(spec.sil_min, spec.sil_max), -1});
        for (std::size_t w = 0; w < chosen.size(); ++w) {
            if (w > 0 && spec.pause_prob > 0.0 && rng.uniform() < spec.pause_prob)
                segs.push_back({sil_id, rng.between(spec.pause_min, spec.pause_max), -1});
            for (const auto& ph : prons[chosen[w]])
                segs.push_back({spec.map.map_phoneme(ph), rng.between(spec.min_duration, spec.max_duration),
                                static_cast<int>(w)});
        }
        segs.push_back({sil_id, rng.between(spec.sil_min, spec.sil_max), -1});

        long long total = 0;
        for (const auto& s : segs) total += s.frames;
        u.features.rate = spec.frame_rate;
        u.features.frames.resize(total, spec.dim);
        Eigen::Index t = 0;
        for (std::size_t k = 0; k < segs.size(); ++k) {
            const auto start = static_cast<std::size_t>(t);
            emit(u.features.frames, t, out.class_means.at(segs[k].label), segs[k].frames);
            u.truth.units.push_back({segs[k].label, start, static_cast<std::size_t>(t)});
            if (segs[k].word >= 0) {
                if (u.truth.words.empty() || k == 0 || segs[k - 1].word != segs[k].word)
                    u.truth.words.push_back({vocab[chosen[static_cast<std::size_t>(segs[k].word)]], k, 0});
                ++u.truth.words.back().count;
            }
        }
        for (auto w : chosen) u.words.push_back(vocab[w]);
        c.utterances.push_back(std::move(u));
    }
    return out;
}

/// Frame-wise nearest-mean labels against the ground-truth class means.
inline double nearest_mean_frame_accuracy(const SyntheticCorpus& sc) {
    std::size_t right = 0, total = 0;
    for (const auto& u : sc.corpus.utterances)
        for (const auto& unit : u.truth.units)
            for (std::size_t t = *unit.start; t < *unit.end; ++t) {
                const Eigen::VectorXd x = u.features.frames.row(static_cast<Eigen::Index>(t)).transpose();
                std::string best;
                double best_d = std::numeric_limits<double>::infinity();
                for (const auto& [id, m] : sc.class_means) {
                    const double d = (x - m).squaredNorm();
                    if (d < best_d) {
                        best_d = d;
                        best = id;
                    }
                }
                right += best == unit.label;
                ++total;
            }
    return total ? static_cast<double>(right) / static_cast<double>(total) : 1.0;
}

}  // namespace vislip
