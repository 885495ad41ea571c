#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/hmm.hpp"
#include "vislip/lm_network.hpp"
#include "vislip/search_graph.hpp"
#include "vislip/viseme_map.hpp"

namespace vislip {

/// Language-model scale and per-word insertion penalty (log domain).
struct DecodeOptions {
    double lm_scale = 1.0;
    double insertion_penalty = 0.0;
};

/// Node roles are recovered from the graph: model entries/exits carry an
/// instance id, word entries a word occurrence.
struct ExpandedGraph {
    SearchGraph graph;
    std::vector<std::size_t> model_entry;  // per instance
    std::vector<std::size_t> model_exit;   // per instance
    std::vector<int> emitting_state;       // per node: 1-based state within its model, 0 otherwise
};

namespace detail {

inline std::pair<std::size_t, std::size_t> add_instance(ExpandedGraph& eg, const ModelSet& models,
                                                        const std::string& label, int word) {
    const auto& m = models.at(label);
    const std::size_t first = eg.graph.nodes().size();
    auto [entry, exit] = eg.graph.add_model(m, word);
    eg.model_entry.push_back(entry);
    eg.model_exit.push_back(exit);
    eg.emitting_state.resize(eg.graph.nodes().size(), 0);
    for (int s = 0; s < m.n_states; ++s) eg.emitting_state[first + 1 + static_cast<std::size_t>(s)] = s + 1;
    return {entry, exit};
}

inline std::size_t add_glue(ExpandedGraph& eg, int word = -1) {
    const auto id = eg.graph.add_node({false, 0, -1, word});
    eg.emitting_state.resize(eg.graph.nodes().size(), 0);
    return id;
}

}  // namespace detail

/// Expands a word network into an HMM state graph: mandatory leading and
/// trailing silence when the network names one, every pronunciation of every
/// word as a model chain, an optional short pause after each word, and scaled
/// network arcs between word ends and word starts.
inline ExpandedGraph expand_network(const ModelSet& models, const WordNetwork& net, const DecodeOptions& opt = {}) {
    if (net.empty()) throw Error("cannot decode with an empty word network");
    ExpandedGraph eg;
    const std::size_t start = detail::add_glue(eg);
    eg.graph.set_start(start);
    std::size_t after_start = start;
    if (!net.sil_label.empty()) {
        auto [e, x] = detail::add_instance(eg, models, net.sil_label, -1);
        eg.graph.add_arc(start, e, 0.0);
        after_start = x;
    }
    const std::size_t final_node = detail::add_glue(eg);
    std::size_t end = final_node;
    if (!net.sil_label.empty()) {
        auto [e, x] = detail::add_instance(eg, models, net.sil_label, -1);
        eg.graph.add_arc(final_node, e, 0.0);
        end = x;
    }
    eg.graph.set_end(end);

    const std::size_t n = net.nodes.size();
    std::vector<std::size_t> word_entry(n, 0), word_junction(n, 0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const auto& w = net.nodes[i];
        auto it = net.expansions.find(w);
        if (it == net.expansions.end() || it->second.empty()) throw Error("word '" + w + "' has no expansion");
        const int occ = eg.graph.add_word_occurrence(w, static_cast<int>(i));
        const std::size_t entry = detail::add_glue(eg, occ);
        const std::size_t word_exit = detail::add_glue(eg);
        for (const auto& pron : it->second) {
            if (pron.empty()) throw Error("word '" + w + "' has an empty expansion");
            std::size_t prev = entry;
            for (const auto& label : pron) {
                auto [e, x] = detail::add_instance(eg, models, label, occ);
                eg.graph.add_arc(prev, e, 0.0);
                prev = x;
            }
            eg.graph.add_arc(prev, word_exit, 0.0);
        }
        std::size_t junction = word_exit;
        if (!net.sp_label.empty()) {
            auto [e, x] = detail::add_instance(eg, models, net.sp_label, -1);
            eg.graph.add_arc(word_exit, e, 0.0);
            if (!models.at(net.sp_label).has_tee()) eg.graph.add_arc(word_exit, x, 0.0);
            junction = x;
        }
        word_entry[i] = entry;
        word_junction[i] = junction;
    }
    for (const auto& a : net.arcs) {
        const std::size_t from = a.from == net.start() ? after_start : word_junction[a.from];
        if (a.from == net.end() || a.to == net.start()) throw Error("network arc leaves the end node");
        const std::size_t to = a.to == net.end() ? final_node : word_entry[a.to];
        const double w = opt.lm_scale * a.logp + (a.to == net.end() ? 0.0 : opt.insertion_penalty);
        eg.graph.add_arc(from, to, w);
    }
    eg.graph.finalize();
    return eg;
}

/// Linear graph over a model-label sequence, used for embedded re-estimation.
inline ExpandedGraph expand_label_chain(const ModelSet& models, std::span<const std::string> labels) {
    ExpandedGraph eg;
    const std::size_t start = detail::add_glue(eg);
    eg.graph.set_start(start);
    std::size_t prev = start;
    for (const auto& l : labels) {
        auto [e, x] = detail::add_instance(eg, models, l, -1);
        eg.graph.add_arc(prev, e, 0.0);
        prev = x;
    }
    eg.graph.set_end(prev);
    eg.graph.finalize();
    return eg;
}

/// Timed unit produced by alignment or decoding. Frames [start, end).
struct AlignedSegment {
    std::string label;
    std::size_t start = 0;
    std::size_t end = 0;
    std::vector<int> states;  // 1-based emitting state per frame
    int word = -1;            // index into the owning result's word list, -1 for fillers

    bool operator==(const AlignedSegment&) const = default;
};

struct DecodeResult {
    std::vector<std::string> words;
    std::vector<AlignedSegment> segments;
    double score = kLogZero;

    /// Timed viseme transcript (fillers included) with word spans.
    Transcript transcript() const {
        Transcript t;
        for (std::size_t s = 0; s < segments.size(); ++s) {
            const auto& seg = segments[s];
            t.units.push_back({seg.label, seg.start, seg.end});
            if (seg.word >= 0) {
                if (t.words.empty() || static_cast<int>(t.words.size()) - 1 != seg.word)
                    t.words.push_back({words[static_cast<std::size_t>(seg.word)], s, 0});
                ++t.words.back().count;
            }
        }
        return t;
    }

    /// Labels with every `drop` label (e.g. short pause) removed.
    std::vector<std::string> labels_without(std::string_view drop) const {
        std::vector<std::string> out;
        for (const auto& s : segments)
            if (s.label != drop) out.push_back(s.label);
        return out;
    }
};

/// Converts a best path into words and timed segments. Segments open at a
/// model entry and close at its exit; zero-frame segments (tee skips) are dropped.
inline DecodeResult read_path(const ExpandedGraph& eg, const ViterbiPath& path) {
    DecodeResult r;
    r.score = path.score;
    const auto& g = eg.graph;
    std::optional<AlignedSegment> open;
    int current_word = -1;
    for (const auto& step : path.steps) {
        const auto& node = g.nodes()[step.node];
        if (node.emitting) {
            if (open) open->states.push_back(eg.emitting_state[step.node]);
            continue;
        }
        if (node.word >= 0) {
            r.words.push_back(g.words()[static_cast<std::size_t>(node.word)].word);
            current_word = static_cast<int>(r.words.size()) - 1;
        }
        if (node.instance < 0) continue;
        const auto inst = static_cast<std::size_t>(node.instance);
        if (step.node == eg.model_entry[inst]) {
            const auto& instance = g.instances()[inst];
            open = AlignedSegment{instance.label, static_cast<std::size_t>(step.t), 0, {},
                                  instance.word >= 0 ? current_word : -1};
        } else if (step.node == eg.model_exit[inst] && open) {
            open->end = static_cast<std::size_t>(step.t);
            if (open->end > open->start) r.segments.push_back(std::move(*open));
            open.reset();
        }
    }
    return r;
}

/// Jointly best word sequence and state path under emissions, transitions
/// and scaled network log-probabilities.
inline DecodeResult viterbi_decode(const ModelSet& models, const WordNetwork& net, const ObservationMatrix& frames,
                                   const DecodeOptions& opt = {}) {
    if (frames.cols() != models.feature_dim)
        throw DimensionError("frames have dimension " + std::to_string(frames.cols()) + ", models expect " +
                             std::to_string(models.feature_dim));
    auto eg = expand_network(models, net, opt);
    const auto emis = emission_table(models, frames);
    const auto path = viterbi(eg.graph, emis);
    if (path.score == kLogZero) throw DecodeError("no complete path through the network");
    return read_path(eg, path);
}

/// Viterbi segmentation constrained to a word transcript: any pronunciation
/// per word, optional short pause between words, silence at both ends
/// (per `opt`). Word break points are kept as segment word indices.
inline DecodeResult force_align(const ModelSet& models, const ObservationMatrix& frames,
                                std::span<const std::string> words, const VisemeDict& viseme_dict,
                                const NetworkOptions& opt = {}) {
    if (words.empty()) throw Error("forced alignment needs at least one word");
    const auto net = linear_network(words, viseme_dict, opt);
    try {
        return viterbi_decode(models, net, frames);
    } catch (const DecodeError&) {
        throw DecodeError("transcript cannot be aligned to " + std::to_string(frames.rows()) + " frames");
    }
}

}  // namespace vislip
