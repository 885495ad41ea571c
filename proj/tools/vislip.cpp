// vislip: command-line driver for the viseme recognition toolkit.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vislip/vislip.hpp"

namespace fs = std::filesystem;
using namespace vislip;

namespace {

constexpr int kExitGeneral = 1;
constexpr int kExitMissingFile = 2;
constexpr int kExitDimension = 3;
constexpr int kExitDecode = 4;

std::string default_out() {
    if (const char* env = std::getenv("VISLIP_OUT"); env && *env) return env;
    return "vislip_out";
}

std::string read(const std::string& path) {
    if (!fs::exists(path)) throw FileError("no such file: " + path, path);
    return text::read_file(path);
}

void put(const fs::path& p, std::string_view s) { text::write_file(p.string(), s); }

/// Prints the effective settings of a command so a run can be repeated.
struct Resolved {
    std::string command;
    std::vector<std::pair<std::string, std::string>> items;

    void add(std::string key, std::string value) { items.emplace_back(std::move(key), std::move(value)); }

    std::string str() const {
        std::string out = "# vislip " + command + "\n";
        for (const auto& [k, v] : items) out += k + " = " + v + "\n";
        return out;
    }
    void print() const { std::cout << str() << std::flush; }
};

PronunciationDict read_dict(const std::string& path, const VisemeMap& map) {
    return load_dictionary(read(path), map.inventory());
}

VisemeMap read_map(const std::string& path) { return load_viseme_map(read(path)); }

/// Applies the optional feature model, checking dimensions against the models.
ObservationMatrix prepare_frames(const ObservationMatrix& raw, const std::optional<LinearModel>& fm,
                                 const ModelSet& models, const std::string& id) {
    ObservationMatrix frames = raw;
    if (fm) {
        if (raw.cols() != fm->mean.size())
            throw DimensionError(id + ": frames have dimension " + std::to_string(raw.cols()) +
                                 ", feature model expects " + std::to_string(fm->mean.size()));
        frames = project_rows(*fm, raw);
    }
    if (frames.cols() != models.feature_dim)
        throw DimensionError(id + ": frames have dimension " + std::to_string(frames.cols()) + ", models expect " +
                             std::to_string(models.feature_dim));
    return frames;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto& part : text::split(s, ','))
        if (!text::trim(part).empty()) out.emplace_back(text::trim(part));
    return out;
}

// ------------------------------------------------------------------ map

struct MapArgs {
    std::string dict, viseme_map, transcripts, out;
    std::optional<std::size_t> threshold;
};

int cmd_map(const MapArgs& a) {
    Resolved r{"map", {}};
    r.add("dict", a.dict);
    r.add("viseme_map", a.viseme_map);
    r.add("transcripts", a.transcripts);
    r.add("threshold", a.threshold ? std::to_string(*a.threshold) : "none");
    r.add("out", a.out);
    r.print();
    const auto map = read_map(a.viseme_map);
    const auto dict = read_dict(a.dict, map);
    const auto lines = load_word_transcripts(read(a.transcripts));
    std::set<std::string> oov;
    for (const auto& [id, words] : lines)
        for (const auto& w : words)
            if (!dict.contains(w)) oov.insert(w);
    if (!oov.empty()) {
        std::string list;
        for (const auto& w : oov) list += " " + w;
        throw Error("out-of-vocabulary words:" + list);
    }
    std::vector<LabelBlock> blocks;
    std::vector<Transcript> ts;
    for (const auto& [id, words] : lines) {
        ts.push_back(words_to_visemes(dict, map, words));
        blocks.push_back({id, ts.back()});
    }
    const auto counts = count_visemes(ts, map);
    fs::create_directories(a.out);
    put(fs::path(a.out) / "visemes.lab", save_labels(blocks));
    std::string csv = "viseme,count\n";
    for (const auto& id : map.ids()) csv += id + "," + std::to_string(counts.at(id)) + "\n";
    put(fs::path(a.out) / "counts.csv", csv);
    if (a.threshold) put(fs::path(a.out) / "viseme_map.txt", save_viseme_map(apply_garbage_threshold(map, counts, *a.threshold)));
    return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::string viseme_map;
};

int cmd_synth(const SynthArgs& a) {
    SyntheticSpec spec;
    if (!a.viseme_map.empty()) spec.map = read_map(a.viseme_map);
    if (!a.config.empty()) spec = parse_synthetic_spec(read(a.config), spec);
    if (a.seed) spec.seed = *a.seed;
    Resolved r{"synth", {}};
    r.add("out", a.out);
    for (const auto& kv : text::key_values(format_synthetic_spec(spec))) r.add(kv.key, kv.value);
    r.print();
    const auto sc = generate_corpus(spec);
    write_corpus(sc.corpus, a.out);
    put(fs::path(a.out) / "synth_config.txt", format_synthetic_spec(spec));
    std::string means;
    for (const auto& [id, m] : sc.class_means) means += id + " " + detail::join_vector(m) + "\n";
    put(fs::path(a.out) / "class_means.txt", means);
    return 0;
}

// -------------------------------------------------------- train / run

struct RecipeArgs {
    std::string manifest, config, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threshold, folds;
    int jobs = 1;
};

RecipeConfig resolve_recipe(const RecipeArgs& a) {
    RecipeConfig cfg;
    if (!a.config.empty()) cfg = parse_recipe_config(read(a.config));
    if (a.seed) cfg.seed = *a.seed;
    if (a.threshold) cfg.garbage_threshold = *a.threshold;
    if (a.folds) cfg.n_folds = *a.folds;
    return cfg;
}

void print_recipe(const std::string& command, const RecipeArgs& a, const RecipeConfig& cfg) {
    Resolved r{command, {}};
    r.add("manifest", a.manifest);
    r.add("out", a.out);
    r.add("jobs", std::to_string(a.jobs));
    for (const auto& kv : text::key_values(format_recipe_config(cfg))) r.add(kv.key, kv.value);
    r.print();
}

int cmd_train(const RecipeArgs& a) {
    const auto cfg = resolve_recipe(a);
    print_recipe("train", a, cfg);
    const auto corpus = read_corpus(a.manifest);
    Fold all;
    for (std::size_t i = 0; i < corpus.size(); ++i) all.train.push_back(i);
    const auto res = run_fold(cfg, corpus, all, 0);
    const fs::path out(a.out);
    fs::create_directories(out);
    put(out / "trace.txt", format_trace(res));
    if (!res.ok) throw Error(res.error);
    put(out / "viseme_map.txt", save_viseme_map(res.map));
    put(out / "models.txt", save_model_set(res.models));
    put(out / "network.txt", save_network(res.network));
    put(out / "aligned.lab", save_labels(res.alignments));
    if (res.feature_model) put(out / "feature_model.txt", save_linear_model(*res.feature_model));
    std::string warnings;
    for (const auto& w : res.warnings) warnings += w + "\n";
    put(out / "warnings.txt", warnings);
    return 0;
}

int cmd_run(const RecipeArgs& a) {
    const auto cfg = resolve_recipe(a);
    print_recipe("run", a, cfg);
    const auto corpus = read_corpus(a.manifest);
    const auto folds = make_folds(corpus.size(), cfg.test_size, cfg.n_folds, cfg.seed);
    const auto rr = run_recipe(cfg, corpus, folds, a.jobs);
    write_run(rr, cfg, a.out);
    int failed = 0;
    for (const auto& f : rr.results) {
        if (f.ok) {
            std::cout << "fold " << f.fold << " " << format_score(f.report) << "\n";
        } else {
            std::cerr << "vislip run: fold " << f.fold << ": " << f.error << "\n";
            ++failed;
        }
    }
    return failed ? kExitGeneral : 0;
}

// -------------------------------------------------------- align/decode

struct AlignArgs {
    std::string models, viseme_map, dict, manifest, feature_model, out;
};

int cmd_align(const AlignArgs& a) {
    Resolved r{"align", {}};
    r.add("models", a.models);
    r.add("viseme_map", a.viseme_map);
    r.add("dict", a.dict);
    r.add("manifest", a.manifest);
    r.add("feature_model", a.feature_model.empty() ? "none" : a.feature_model);
    r.add("out", a.out);
    r.print();
    const auto models = load_model_set(read(a.models));
    const auto map = read_map(a.viseme_map);
    const auto corpus = read_corpus(a.manifest);
    const auto dict = a.dict.empty() ? corpus.dict : read_dict(a.dict, map);
    std::optional<LinearModel> fm;
    if (!a.feature_model.empty()) fm = load_linear_model(read(a.feature_model));
    const auto vdict = make_viseme_dict(dict, map);
    NetworkOptions opt{map.silence_id(), map.has_class(kShortPausePhone) ? std::string(kShortPausePhone) : ""};
    std::vector<LabelBlock> blocks;
    for (const auto& u : corpus.utterances) {
        const auto frames = prepare_frames(u.features.frames, fm, models, u.id);
        try {
            blocks.push_back({u.id, force_align(models, frames, u.words, vdict, opt).transcript()});
        } catch (const DecodeError& e) {
            throw DecodeError(u.id + ": " + e.what());
        }
    }
    fs::create_directories(a.out);
    put(fs::path(a.out) / "aligned.lab", save_labels(blocks));
    return 0;
}

struct DecodeArgs {
    std::string models, network, manifest, feature_model, out;
    double lm_scale = 1.0, insertion_penalty = 0.0;
};

int cmd_decode(const DecodeArgs& a) {
    Resolved r{"decode", {}};
    r.add("models", a.models);
    r.add("network", a.network);
    r.add("manifest", a.manifest);
    r.add("feature_model", a.feature_model.empty() ? "none" : a.feature_model);
    r.add("lm_scale", text::format_double(a.lm_scale));
    r.add("insertion_penalty", text::format_double(a.insertion_penalty));
    r.add("out", a.out);
    r.print();
    const auto models = load_model_set(read(a.models));
    const auto net = load_network(read(a.network));
    const auto corpus = read_corpus(a.manifest);
    std::optional<LinearModel> fm;
    if (!a.feature_model.empty()) fm = load_linear_model(read(a.feature_model));
    std::vector<LabelBlock> blocks;
    std::string words;
    for (const auto& u : corpus.utterances) {
        const auto frames = prepare_frames(u.features.frames, fm, models, u.id);
        DecodeResult res;
        try {
            res = viterbi_decode(models, net, frames, {a.lm_scale, a.insertion_penalty});
        } catch (const DecodeError& e) {
            throw DecodeError(u.id + ": " + e.what());
        }
        blocks.push_back({u.id, res.transcript()});
        words += u.id;
        for (const auto& w : res.words) words += " " + w;
        words += "\n";
    }
    fs::create_directories(a.out);
    put(fs::path(a.out) / "hyp.lab", save_labels(blocks));
    put(fs::path(a.out) / "words.txt", words);
    return 0;
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
    std::vector<std::string> refs, hyps;
    std::string viseme_map, drop = "sp", name = "Accuracy", out;
};

int cmd_score(const ScoreArgs& a) {
    Resolved r{"score", {}};
    for (std::size_t i = 0; i < a.refs.size(); ++i) r.add("ref", a.refs[i]);
    for (std::size_t i = 0; i < a.hyps.size(); ++i) r.add("hyp", a.hyps[i]);
    r.add("viseme_map", a.viseme_map.empty() ? "none" : a.viseme_map);
    r.add("drop", a.drop);
    r.add("name", a.name);
    r.add("out", a.out);
    r.print();
    if (a.refs.size() != a.hyps.size() || a.refs.empty()) throw Error("give one --hyp per --ref");
    const auto drops = split_list(a.drop);
    auto keep = [&](const Transcript& t) {
        std::vector<std::string> out;
        for (const auto& u : t.units)
            if (std::find(drops.begin(), drops.end(), u.label) == drops.end()) out.push_back(u.label);
        return out;
    };
    std::vector<std::vector<LabelAlignment>> pairs;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < a.refs.size(); ++i) {
        const auto ref = load_labels(read(a.refs[i]));
        const auto hyp = load_labels(read(a.hyps[i]));
        std::map<std::string, const Transcript*> by_id;
        for (const auto& b : hyp) by_id[b.id] = &b.transcript;
        std::vector<LabelAlignment> al;
        for (const auto& b : ref) {
            auto it = by_id.find(b.id);
            if (it == by_id.end()) throw Error(a.hyps[i] + " has no hypothesis for '" + b.id + "'");
            al.push_back(align_labels(keep(b.transcript), keep(*it->second)));
            for (const auto& l : al.back().ref) seen.insert(l);
            for (const auto& l : al.back().hyp) seen.insert(l);
        }
        pairs.push_back(std::move(al));
    }
    std::vector<std::string> labels;
    if (!a.viseme_map.empty()) {
        for (const auto& id : read_map(a.viseme_map).ids())
            if (std::find(drops.begin(), drops.end(), id) == drops.end()) labels.push_back(id);
        for (const auto& l : seen)
            if (std::find(labels.begin(), labels.end(), l) == labels.end())
                throw Error("label '" + l + "' is not a class of " + a.viseme_map);
    } else {
        labels.assign(seen.begin(), seen.end());
    }
    const fs::path out(a.out);
    fs::create_directories(out);
    std::string lines;
    std::vector<double> acc;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto rep = score(pairs[i]);
        lines += format_score(rep) + "\n";
        acc.push_back(rep.accuracy());
        const auto name = pairs.size() == 1 ? std::string("confusion.csv") : "confusion_" + std::to_string(i) + ".csv";
        put(out / name, save_confusion_csv(confusion(pairs[i], labels)));
    }
    put(out / "score.txt", lines);
    std::cout << lines;
    if (acc.size() >= 2) {
        std::vector<NamedFoldStatistics> rows{{a.name, fold_stats(acc)}};
        put(out / "fold_stats.txt", format_fold_stats_table(rows));
        put(out / "fold_stats.csv", save_fold_stats_csv(rows));
    }
    return 0;
}

// -------------------------------------------------------------- analyze

struct AnalyzeArgs {
    std::vector<std::string> confusions, sets;
    std::string mode = "perfold", out;
    std::size_t top_k = 10;
    double tie_epsilon = 0.005;
};

int cmd_analyze(const AnalyzeArgs& a) {
    Resolved r{"analyze", {}};
    for (const auto& c : a.confusions) r.add("confusion", c);
    for (const auto& s : a.sets) r.add("set", s);
    r.add("mode", a.mode);
    r.add("top_k", std::to_string(a.top_k));
    r.add("tie_epsilon", text::format_double(a.tie_epsilon));
    r.add("out", a.out);
    r.print();
    if (a.mode != "perfold" && a.mode != "pooled") throw Error("--mode must be 'perfold' or 'pooled'");
    const auto mode = a.mode == "pooled" ? ProbabilityMode::kPooled : ProbabilityMode::kPerFold;
    std::vector<std::pair<std::string, std::vector<std::string>>> sets;
    if (!a.confusions.empty()) sets.emplace_back("all", a.confusions);
    for (const auto& s : a.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw Error("--set takes NAME=file1,file2,...");
        sets.emplace_back(s.substr(0, eq), split_list(s.substr(eq + 1)));
    }
    if (sets.empty()) throw Error("nothing to analyze: give --confusion or --set");

    const fs::path out(a.out);
    fs::create_directories(out);
    std::vector<std::pair<std::string, RankingResult>> rankings;
    std::vector<NamedFoldStatistics> stats;
    std::string summary;
    for (const auto& [name, files] : sets) {
        if (files.empty()) throw Error("set '" + name + "' lists no files");
        std::vector<ConfusionMatrix> cms;
        std::vector<double> acc;
        for (const auto& f : files) {
            cms.push_back(load_confusion_csv(read(f)));
            const auto rep = cms.back().report();
            if (rep.N > 0) acc.push_back(rep.accuracy());
        }
        const auto probs = viseme_probabilities(cms, mode);
        const auto ranking = rank_visemes(probs, a.tie_epsilon);
        std::size_t defined = 0;
        for (const auto& p : probs) defined += p.defined;
        const auto decline = decline_curve(probs, std::min(a.top_k, defined));
        put(out / ("ranking_" + name + ".csv"), save_ranking_csv(ranking));
        put(out / ("decline_" + name + ".csv"), save_decline_csv(decline));
        put(out / ("decline_" + name + ".dat"), save_decline_dat(decline));
        if (acc.size() >= 2) stats.push_back({name, fold_stats(acc)});
        summary += "set " + name + " (" + std::to_string(files.size()) + " matrices)\nranking " + ranking.format() + "\n";
        rankings.emplace_back(name, ranking);
    }
    std::vector<NamedCorrelation> cors;
    for (std::size_t i = 0; i < rankings.size(); ++i)
        for (std::size_t j = i + 1; j < rankings.size(); ++j) {
            try {
                cors.push_back({rankings[i].first, rankings[j].first, spearman(rankings[i].second, rankings[j].second)});
            } catch (const Error& e) {
                summary += "correlation " + rankings[i].first + " vs " + rankings[j].first + " undefined: " + e.what() + "\n";
            }
        }
    for (const auto& c : cors)
        summary += "correlation " + c.a + " vs " + c.b + " r=" + text::format_fixed(c.result.r, 4) +
                   " p=" + text::format_double(c.result.p_value) + (c.result.exact ? " (exact)" : " (t)") + "\n";
    put(out / "correlations.csv", save_correlations_csv(cors));
    put(out / "fold_stats.csv", save_fold_stats_csv(stats));
    put(out / "fold_stats.txt", format_fold_stats_table(stats));
    summary += format_fold_stats_table(stats);
    put(out / "summary.txt", summary);
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const FileError*>(&e)) return kExitMissingFile;
    if (dynamic_cast<const DimensionError*>(&e)) return kExitDimension;
    if (dynamic_cast<const DecodeError*>(&e)) return kExitDecode;
    return kExitGeneral;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Viseme recognition toolkit"};
    app.require_subcommand(1);
    const std::string out_default = default_out();

    MapArgs map_args;
    map_args.out = out_default;
    auto* map = app.add_subcommand("map", "Convert word transcripts to viseme transcripts and count visemes");
    map->add_option("--dict", map_args.dict, "Pronunciation dictionary")->required();
    map->add_option("--viseme-map", map_args.viseme_map, "Viseme map file")->required();
    map->add_option("--transcripts", map_args.transcripts, "Word transcripts (id WORD ...)")->required();
    map->add_option("--threshold", map_args.threshold, "Also write the garbage-merged map");
    map->add_option("--out", map_args.out, "Output directory");

    SynthArgs synth_args;
    synth_args.out = out_default;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    synth->add_option("--config", synth_args.config, "Synthesis settings (key = value)");
    synth->add_option("--seed", synth_args.seed, "Random seed");
    synth->add_option("--viseme-map", synth_args.viseme_map, "Viseme map (default: built-in)");
    synth->add_option("--out", synth_args.out, "Corpus directory");

    RecipeArgs train_args, run_args;
    train_args.out = run_args.out = out_default;
    for (auto [name, desc, args] : {std::tuple{"train", "Train models on a whole corpus", &train_args},
                                    std::tuple{"run", "Cross-validated recipe: train, decode, score, analyze", &run_args}}) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--manifest", args->manifest, "Corpus manifest")->required();
        sub->add_option("--config", args->config, "Recipe configuration (key = value)");
        sub->add_option("--seed", args->seed, "Seed for fold selection");
        sub->add_option("--threshold", args->threshold, "Garbage threshold");
        sub->add_option("--folds", args->folds, "Number of folds");
        sub->add_option("--jobs", args->jobs, "Folds run concurrently")->check(CLI::PositiveNumber);
        sub->add_option("--out", args->out, "Output directory");
    }

    AlignArgs align_args;
    align_args.out = out_default;
    auto* align = app.add_subcommand("align", "Force-align word transcripts");
    align->add_option("--models", align_args.models, "Model set")->required();
    align->add_option("--viseme-map", align_args.viseme_map, "Viseme map the models were trained with")->required();
    align->add_option("--dict", align_args.dict, "Pronunciation dictionary (default: the corpus one)");
    align->add_option("--manifest", align_args.manifest, "Corpus manifest")->required();
    align->add_option("--feature-model", align_args.feature_model, "Linear feature model to project frames");
    align->add_option("--out", align_args.out, "Output directory");

    DecodeArgs decode_args;
    decode_args.out = out_default;
    auto* decode = app.add_subcommand("decode", "Decode utterances with a word network");
    decode->add_option("--models", decode_args.models, "Model set")->required();
    decode->add_option("--network", decode_args.network, "Word network")->required();
    decode->add_option("--manifest", decode_args.manifest, "Corpus manifest")->required();
    decode->add_option("--feature-model", decode_args.feature_model, "Linear feature model to project frames");
    decode->add_option("--lm-scale", decode_args.lm_scale, "Language model scale");
    decode->add_option("--insertion-penalty", decode_args.insertion_penalty, "Word insertion log penalty");
    decode->add_option("--out", decode_args.out, "Output directory");

    ScoreArgs score_args;
    score_args.out = out_default;
    auto* scorer = app.add_subcommand("score", "Score hypotheses against references");
    scorer->add_option("--ref", score_args.refs, "Reference label file (repeatable)")->required();
    scorer->add_option("--hyp", score_args.hyps, "Hypothesis label file (repeatable)")->required();
    scorer->add_option("--viseme-map", score_args.viseme_map, "Fixes the confusion class order");
    scorer->add_option("--drop", score_args.drop, "Comma-separated labels ignored in scoring");
    scorer->add_option("--name", score_args.name, "Row name in the fold statistics table");
    scorer->add_option("--out", score_args.out, "Output directory");

    AnalyzeArgs analyze_args;
    analyze_args.out = out_default;
    auto* analyze = app.add_subcommand("analyze", "Rank visemes, correlate rankings, summarise folds");
    analyze->add_option("--confusion", analyze_args.confusions, "Confusion CSV (repeatable; one set)");
    analyze->add_option("--set", analyze_args.sets, "NAME=file1,file2,... (repeatable)");
    analyze->add_option("--mode", analyze_args.mode, "perfold or pooled");
    analyze->add_option("--top-k", analyze_args.top_k, "Length of the decline curve");
    analyze->add_option("--tie-epsilon", analyze_args.tie_epsilon, "Tie tolerance for rankings");
    analyze->add_option("--out", analyze_args.out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (command == "map") return cmd_map(map_args);
        if (command == "synth") return cmd_synth(synth_args);
        if (command == "train") return cmd_train(train_args);
        if (command == "run") return cmd_run(run_args);
        if (command == "align") return cmd_align(align_args);
        if (command == "decode") return cmd_decode(decode_args);
        if (command == "score") return cmd_score(score_args);
        if (command == "analyze") return cmd_analyze(analyze_args);
    } catch (const std::exception& e) {
        std::cerr << "vislip " << command << ": " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kExitGeneral;
}
