#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/text_io.hpp"
#include "vislip/viseme_map.hpp"

namespace vislip {

inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kSentenceEnd = "</s>";

/// Bigram probabilities over sentence-start, the vocabulary, and sentence-end.
/// Predecessor row 0 is <s>, rows 1..V the words; successor column V is </s>.
class BigramLM {
public:
    BigramLM(std::vector<std::string> words, Eigen::MatrixXd prob, double floor)
        : words_(std::move(words)), prob_(std::move(prob)), floor_(floor) {
        for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = i;
    }

    const std::vector<std::string>& words() const { return words_; }
    std::size_t vocab_size() const { return words_.size(); }
    double floor() const { return floor_; }
    const Eigen::MatrixXd& matrix() const { return prob_; }

    double prob(std::string_view pred, std::string_view succ) const {
        return prob_(pred_row(pred), succ_col(succ));
    }
    double logp(std::string_view pred, std::string_view succ) const { return std::log(prob(pred, succ)); }

    Eigen::Index pred_row(std::string_view w) const {
        if (w == kSentenceStart) return 0;
        return static_cast<Eigen::Index>(word_index(w) + 1);
    }
    Eigen::Index succ_col(std::string_view w) const {
        if (w == kSentenceEnd) return static_cast<Eigen::Index>(words_.size());
        return static_cast<Eigen::Index>(word_index(w));
    }

private:
    std::size_t word_index(std::string_view w) const {
        auto it = index_.find(std::string(w));
        if (it == index_.end()) throw OovError(std::string(w));
        return it->second;
    }

    std::vector<std::string> words_;
    Eigen::MatrixXd prob_;
    double floor_;
    std::map<std::string, std::size_t> index_;
};

namespace detail {

/// Raises entries below `floor` to exactly `floor` and rescales the rest so
/// the row sums to one; repeats until no rescaled entry drops under the floor.
inline void floor_row(Eigen::RowVectorXd& row, double floor) {
    const Eigen::Index n = row.size();
    const double total = row.sum();
    if (total <= 0.0) {
        row.setConstant(1.0 / static_cast<double>(n));
        return;
    }
    Eigen::RowVectorXd ml = row / total;
    if (floor <= 0.0) {
        row = ml;
        return;
    }
    std::vector<bool> floored(static_cast<std::size_t>(n), false);
    while (true) {
        double free_mass = 1.0, free_ml = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (floored[static_cast<std::size_t>(i)]) free_mass -= floor;
            else free_ml += ml[i];
        }
        bool changed = false;
        const double scale = free_ml > 0.0 ? free_mass / free_ml : 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (floored[static_cast<std::size_t>(i)]) continue;
            if (ml[i] * scale < floor) {
                floored[static_cast<std::size_t>(i)] = true;
                changed = true;
            }
        }
        if (!changed) {
            for (Eigen::Index i = 0; i < n; ++i) row[i] = floored[static_cast<std::size_t>(i)] ? floor : ml[i] * scale;
            return;
        }
    }
}

}  // namespace detail

/// Maximum-likelihood bigram estimate, one sentence per transcript. Pairs
/// whose probability falls under `floor` are raised to it and the row's
/// remaining mass is rescaled, so every entry is >= floor and rows sum to 1.
/// `extra_vocab` adds words that may never appear in the transcripts; their
/// rows (with no observed successors) are uniform.
inline BigramLM estimate_bigram(std::span<const std::vector<std::string>> transcripts, double floor,
                                std::span<const std::string> extra_vocab = {}) {
    std::set<std::string> vocab;
    for (const auto& t : transcripts)
        for (const auto& w : t) vocab.insert(text::to_upper(w));
    for (const auto& w : extra_vocab) vocab.insert(text::to_upper(w));
    if (vocab.empty()) throw Error("bigram estimation needs a non-empty vocabulary");
    const auto V = static_cast<Eigen::Index>(vocab.size());
    if (floor < 0.0 || floor * static_cast<double>(V + 2) >= 1.0)
        throw Error("bigram floor must satisfy 0 <= floor < 1/|vocab| (vocab counts both sentence markers)");

    std::vector<std::string> words(vocab.begin(), vocab.end());
    std::map<std::string, Eigen::Index> idx;
    for (Eigen::Index i = 0; i < V; ++i) idx[words[static_cast<std::size_t>(i)]] = i;

    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(V + 1, V + 1);
    for (const auto& t : transcripts) {
        Eigen::Index prev = 0;
        for (const auto& w : t) {
            const auto j = idx.at(text::to_upper(w));
            counts(prev, j) += 1.0;
            prev = j + 1;
        }
        counts(prev, V) += 1.0;
    }
    for (Eigen::Index r = 0; r <= V; ++r) {
        Eigen::RowVectorXd row = counts.row(r);
        detail::floor_row(row, floor);
        counts.row(r) = row;
    }
    return BigramLM(std::move(words), std::move(counts), floor);
}

/// Word graph for decoding. Node 0 is sentence start, the last node sentence
/// end; the nodes in between are word occurrences (unique words for a bigram
/// network, repeats allowed for a linear transcript network).
struct WordNetwork {
    struct Arc {
        std::size_t from = 0;
        std::size_t to = 0;
        double logp = 0.0;
        bool operator==(const Arc&) const = default;
    };

    std::vector<std::string> nodes;
    std::vector<Arc> arcs;
    VisemeDict expansions;
    std::string sil_label;  // mandatory silence at both ends; empty = none
    std::string sp_label;   // optional short pause after each word; empty = none

    std::size_t start() const { return 0; }
    std::size_t end() const { return nodes.size() - 1; }
    bool empty() const { return nodes.size() <= 2; }

    bool operator==(const WordNetwork&) const = default;
};

struct NetworkOptions {
    std::string sil_label = "v18";
    std::string sp_label = "sp";
};

/// Bigram graph restricted to arcs with probability > 0. Words that cannot
/// be reached from start or cannot reach end are dropped.
inline WordNetwork build_network(const BigramLM& lm, const VisemeDict& viseme_dict, const NetworkOptions& opt = {}) {
    for (const auto& w : lm.words()) {
        auto it = viseme_dict.find(w);
        if (it == viseme_dict.end() || it->second.empty())
            throw Error("word '" + w + "' has no viseme expansion");
    }
    const std::size_t V = lm.vocab_size();
    const auto& P = lm.matrix();
    // node 0 = <s>, 1..V words, V+1 = </s>
    std::vector<std::vector<std::size_t>> succ(V + 2), pred(V + 2);
    auto prob = [&](std::size_t from, std::size_t to) -> double {
        if (from == V + 1 || to == 0) return 0.0;
        return P(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to == V + 1 ? V : to - 1));
    };
    for (std::size_t f = 0; f <= V; ++f)
        for (std::size_t t = 1; t <= V + 1; ++t)
            if (prob(f, t) > 0.0) {
                succ[f].push_back(t);
                pred[t].push_back(f);
            }
    auto reach = [&](std::size_t from, const std::vector<std::vector<std::size_t>>& adj) {
        std::vector<bool> seen(V + 2, false);
        std::vector<std::size_t> stack{from};
        seen[from] = true;
        while (!stack.empty()) {
            auto u = stack.back();
            stack.pop_back();
            for (auto v : adj[u])
                if (!seen[v]) {
                    seen[v] = true;
                    stack.push_back(v);
                }
        }
        return seen;
    };
    const auto fwd = reach(0, succ);
    const auto bwd = reach(V + 1, pred);

    WordNetwork net;
    net.sil_label = opt.sil_label;
    net.sp_label = opt.sp_label;
    std::vector<long> remap(V + 2, -1);
    remap[0] = 0;
    net.nodes.emplace_back(kSentenceStart);
    for (std::size_t i = 1; i <= V; ++i) {
        if (!fwd[i] || !bwd[i]) continue;
        remap[i] = static_cast<long>(net.nodes.size());
        const auto& w = lm.words()[i - 1];
        net.nodes.push_back(w);
        net.expansions[w] = viseme_dict.at(w);
    }
    remap[V + 1] = static_cast<long>(net.nodes.size());
    net.nodes.emplace_back(kSentenceEnd);
    for (std::size_t f = 0; f <= V; ++f) {
        if (remap[f] < 0) continue;
        for (auto t : succ[f]) {
            if (remap[t] < 0) continue;
            net.arcs.push_back({static_cast<std::size_t>(remap[f]), static_cast<std::size_t>(remap[t]),
                                std::log(prob(f, t))});
        }
    }
    if (net.empty()) throw Error("bigram network contains no word reachable from start and end");
    return net;
}

/// Chain network start -> w1 -> ... -> wK -> end with zero-cost arcs.
inline WordNetwork linear_network(std::span<const std::string> words, const VisemeDict& viseme_dict,
                                  const NetworkOptions& opt = {}) {
    WordNetwork net;
    net.sil_label = opt.sil_label;
    net.sp_label = opt.sp_label;
    net.nodes.emplace_back(kSentenceStart);
    for (const auto& raw : words) {
        const auto w = text::to_upper(raw);
        auto it = viseme_dict.find(w);
        if (it == viseme_dict.end() || it->second.empty()) throw OovError(w);
        net.nodes.push_back(w);
        net.expansions[w] = it->second;
    }
    net.nodes.emplace_back(kSentenceEnd);
    for (std::size_t i = 0; i + 1 < net.nodes.size(); ++i) net.arcs.push_back({i, i + 1, 0.0});
    return net;
}

/// Text form: options, arcs `FROM TO logp` sorted by name, then expansions.
/// Only networks with unique node names can be written.
inline std::string save_network(const WordNetwork& net) {
    std::set<std::string> seen;
    for (const auto& n : net.nodes)
        if (!seen.insert(n).second) throw Error("cannot serialise a network with repeated node '" + n + "'");
    std::vector<std::tuple<std::string, std::string, double>> arcs;
    for (const auto& a : net.arcs) arcs.emplace_back(net.nodes[a.from], net.nodes[a.to], a.logp);
    std::sort(arcs.begin(), arcs.end());
    std::string out;
    out += "sil " + (net.sil_label.empty() ? std::string("-") : net.sil_label) + "\n";
    out += "sp " + (net.sp_label.empty() ? std::string("-") : net.sp_label) + "\n";
    out += "arcs " + std::to_string(arcs.size()) + "\n";
    for (const auto& [f, t, lp] : arcs) out += f + " " + t + " " + text::format_g17(lp) + "\n";
    std::size_t n_exp = 0;
    for (const auto& [_, prons] : net.expansions) n_exp += prons.size();
    out += "expansions " + std::to_string(n_exp) + "\n";
    for (const auto& [w, prons] : net.expansions)
        for (const auto& pron : prons) {
            out += w;
            for (const auto& v : pron) out += " " + v;
            out += "\n";
        }
    return out;
}

inline WordNetwork load_network(std::string_view contents) {
    const auto ls = text::lines(contents);
    std::size_t i = 0;
    auto next = [&](std::string_view key) {
        if (i >= ls.size()) throw ParseError("truncated network file", i + 1);
        auto toks = text::split_ws(ls[i]);
        if (toks.size() != 2 || toks[0] != key) throw ParseError("expected '" + std::string(key) + " <value>'", i + 1);
        ++i;
        return toks[1];
    };
    WordNetwork net;
    net.sil_label = next("sil");
    net.sp_label = next("sp");
    if (net.sil_label == "-") net.sil_label.clear();
    if (net.sp_label == "-") net.sp_label.clear();
    const auto n_arcs = text::parse_int(next("arcs"), i);
    std::vector<std::tuple<std::string, std::string, double>> arcs;
    std::set<std::string> words;
    for (long long k = 0; k < n_arcs; ++k, ++i) {
        if (i >= ls.size()) throw ParseError("truncated arc list", i + 1);
        auto toks = text::split_ws(ls[i]);
        if (toks.size() != 3) throw ParseError("arc lines read 'FROM TO logp'", i + 1);
        arcs.emplace_back(toks[0], toks[1], text::parse_double(toks[2], i + 1));
        for (const auto& w : {toks[0], toks[1]})
            if (w != kSentenceStart && w != kSentenceEnd) words.insert(w);
    }
    const auto n_exp = text::parse_int(next("expansions"), i);
    for (long long k = 0; k < n_exp; ++k, ++i) {
        if (i >= ls.size()) throw ParseError("truncated expansion list", i + 1);
        auto toks = text::split_ws(ls[i]);
        if (toks.size() < 2) throw ParseError("expansion lines read 'WORD v1 v2 ...'", i + 1);
        net.expansions[toks[0]].emplace_back(toks.begin() + 1, toks.end());
        words.insert(toks[0]);
    }
    std::map<std::string, std::size_t> idx;
    net.nodes.emplace_back(kSentenceStart);
    for (const auto& w : words) {
        idx[w] = net.nodes.size();
        net.nodes.push_back(w);
    }
    idx[std::string(kSentenceStart)] = 0;
    idx[std::string(kSentenceEnd)] = net.nodes.size();
    net.nodes.emplace_back(kSentenceEnd);
    for (const auto& [f, t, lp] : arcs) net.arcs.push_back({idx.at(f), idx.at(t), lp});
    std::sort(net.arcs.begin(), net.arcs.end(),
              [](const auto& a, const auto& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
    return net;
}

}  // namespace vislip
