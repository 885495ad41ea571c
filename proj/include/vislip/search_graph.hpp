#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/hmm.hpp"

namespace vislip {

/// Flattened HMM network: emitting nodes carry a pool state, non-emitting
/// nodes glue model instances and word boundaries together. Arcs of model
/// instances remember which transition of which model they realise, so
/// forward-backward can accumulate transition counts.
class SearchGraph {
public:
    struct Node {
        bool emitting = false;
        std::size_t pool_state = 0;  // emitting nodes only
        int instance = -1;           // model instance this node belongs to
        int word = -1;               // word occurrence entered here (word-entry markers)
    };

    struct Arc {
        std::size_t from = 0;
        std::size_t to = 0;
        double logw = 0.0;
        int instance = -1;  // owning model instance, -1 for glue
        int ti = 0, tj = 0; // transition (ti -> tj) of that model
    };

    struct Instance {
        std::string label;
        int word = -1;  // word occurrence the instance spells, -1 for fillers
    };

    struct WordOccurrence {
        std::string word;
        int network_node = -1;
    };

    std::size_t add_node(Node n) {
        nodes_.push_back(n);
        finalized_ = false;
        return nodes_.size() - 1;
    }

    void add_arc(std::size_t from, std::size_t to, double logw, int instance = -1, int ti = 0, int tj = 0) {
        if (logw == kLogZero) return;
        arcs_.push_back({from, to, logw, instance, ti, tj});
        finalized_ = false;
    }

    int add_word_occurrence(std::string word, int network_node) {
        words_.push_back({std::move(word), network_node});
        return static_cast<int>(words_.size()) - 1;
    }

    /// Expands `model` between two new non-emitting nodes; returns (entry, exit).
    std::pair<std::size_t, std::size_t> add_model(const GmmHmm& model, int word = -1) {
        const int inst = static_cast<int>(instances_.size());
        instances_.push_back({model.label, word});
        const std::size_t entry = add_node({false, 0, inst, -1});
        std::vector<std::size_t> ids;
        ids.push_back(entry);
        for (int s = 0; s < model.n_states; ++s) ids.push_back(add_node({true, model.states[s], inst, -1}));
        const std::size_t exit = add_node({false, 0, inst, -1});
        ids.push_back(exit);
        const int n = model.n_states + 2;
        for (int i = 0; i < n - 1; ++i)
            for (int j = std::max(i, 1); j < n; ++j)
                if (model.trans(i, j) > 0.0) add_arc(ids[i], ids[j], std::log(model.trans(i, j)), inst, i, j);
        return {entry, exit};
    }

    void set_start(std::size_t n) { start_ = n; }
    void set_end(std::size_t n) { end_ = n; }
    std::size_t start() const { return start_; }
    std::size_t end() const { return end_; }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Arc>& arcs() const { return arcs_; }
    const std::vector<Instance>& instances() const { return instances_; }
    const std::vector<WordOccurrence>& words() const { return words_; }

    /// Builds adjacency and a topological order of the non-emitting nodes.
    void finalize() {
        if (finalized_) return;
        const std::size_t n = nodes_.size();
        in_.assign(n, {});
        out_.assign(n, {});
        for (std::size_t a = 0; a < arcs_.size(); ++a) {
            in_[arcs_[a].to].push_back(a);
            out_[arcs_[a].from].push_back(a);
        }
        std::vector<std::size_t> indeg(n, 0);
        for (const auto& a : arcs_)
            if (!nodes_[a.from].emitting && !nodes_[a.to].emitting) ++indeg[a.to];
        topo_.clear();
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < n; ++i)
            if (!nodes_[i].emitting && indeg[i] == 0) ready.push_back(i);
        std::size_t head = 0;
        while (head < ready.size()) {
            const std::size_t u = ready[head++];
            topo_.push_back(u);
            for (auto a : out_[u]) {
                const auto v = arcs_[a].to;
                if (!nodes_[v].emitting && --indeg[v] == 0) ready.push_back(v);
            }
        }
        std::size_t non_emitting = 0;
        for (const auto& nd : nodes_)
            if (!nd.emitting) ++non_emitting;
        if (topo_.size() != non_emitting) throw Error("search graph has a cycle of non-emitting arcs");
        emitting_.clear();
        for (std::size_t i = 0; i < n; ++i)
            if (nodes_[i].emitting) emitting_.push_back(i);
        finalized_ = true;
    }

    const std::vector<std::size_t>& incoming(std::size_t n) const { return in_[n]; }
    const std::vector<std::size_t>& outgoing(std::size_t n) const { return out_[n]; }
    const std::vector<std::size_t>& topo_order() const { return topo_; }
    const std::vector<std::size_t>& emitting_nodes() const { return emitting_; }

private:
    std::vector<Node> nodes_;
    std::vector<Arc> arcs_;
    std::vector<Instance> instances_;
    std::vector<WordOccurrence> words_;
    std::size_t start_ = 0, end_ = 0;
    bool finalized_ = false;
    std::vector<std::vector<std::size_t>> in_, out_;
    std::vector<std::size_t> topo_, emitting_;
};

/// log b_s(x_t) for every pool state s and frame t (row t).
inline Eigen::MatrixXd emission_table(const ModelSet& models, const ObservationMatrix& frames) {
    if (frames.rows() > 0 && frames.cols() != models.feature_dim)
        throw DimensionError("frames have dimension " + std::to_string(frames.cols()) + ", models expect " +
                             std::to_string(models.feature_dim));
    Eigen::MatrixXd table(frames.rows(), static_cast<Eigen::Index>(models.pool.size()));
    for (Eigen::Index t = 0; t < frames.rows(); ++t)
        for (std::size_t s = 0; s < models.pool.size(); ++s)
            table(t, static_cast<Eigen::Index>(s)) = models.pool[s].log_likelihood(frames.row(t));
    return table;
}

/// Forward and backward passes over a graph in log space. Row t of alpha and
/// beta holds the scores after t frames have been consumed (t = 0..T).
struct ForwardBackward {
    Eigen::MatrixXd alpha;
    Eigen::MatrixXd beta;
    double log_likelihood = kLogZero;
    double backward_log_likelihood = kLogZero;
};

inline ForwardBackward forward_backward(SearchGraph& g, const Eigen::MatrixXd& emis) {
    g.finalize();
    const Eigen::Index T = emis.rows();
    const auto n = static_cast<Eigen::Index>(g.nodes().size());
    const auto& nodes = g.nodes();
    const auto& arcs = g.arcs();
    ForwardBackward fb;
    fb.alpha = Eigen::MatrixXd::Constant(T + 1, n, kLogZero);
    fb.beta = Eigen::MatrixXd::Constant(T + 1, n, kLogZero);
    auto& A = fb.alpha;
    auto& B = fb.beta;

    for (Eigen::Index t = 0; t <= T; ++t) {
        if (t == 0) {
            A(0, static_cast<Eigen::Index>(g.start())) = 0.0;
        } else {
            for (auto v : g.emitting_nodes()) {
                double acc = kLogZero;
                for (auto ai : g.incoming(v)) {
                    const auto& a = arcs[ai];
                    acc = log_add(acc, A(t - 1, static_cast<Eigen::Index>(a.from)) + a.logw);
                }
                if (acc != kLogZero) acc += emis(t - 1, static_cast<Eigen::Index>(nodes[v].pool_state));
                A(t, static_cast<Eigen::Index>(v)) = acc;
            }
        }
        for (auto v : g.topo_order()) {
            double acc = A(t, static_cast<Eigen::Index>(v));
            for (auto ai : g.incoming(v)) {
                const auto& a = arcs[ai];
                acc = log_add(acc, A(t, static_cast<Eigen::Index>(a.from)) + a.logw);
            }
            A(t, static_cast<Eigen::Index>(v)) = acc;
        }
    }
    fb.log_likelihood = A(T, static_cast<Eigen::Index>(g.end()));

    const auto& topo = g.topo_order();
    for (Eigen::Index t = T; t >= 0; --t) {
        auto follow = [&](std::size_t u) {
            double acc = kLogZero;
            for (auto ai : g.outgoing(u)) {
                const auto& a = arcs[ai];
                const auto v = static_cast<Eigen::Index>(a.to);
                if (nodes[a.to].emitting) {
                    if (t < T)
                        acc = log_add(acc, a.logw + emis(t, static_cast<Eigen::Index>(nodes[a.to].pool_state)) +
                                               B(t + 1, v));
                } else {
                    acc = log_add(acc, a.logw + B(t, v));
                }
            }
            return acc;
        };
        for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
            const auto u = *it;
            double acc = follow(u);
            if (t == T && u == g.end()) acc = log_add(acc, 0.0);
            B(t, static_cast<Eigen::Index>(u)) = acc;
        }
        if (t > 0)
            for (auto u : g.emitting_nodes()) B(t, static_cast<Eigen::Index>(u)) = follow(u);
    }
    fb.backward_log_likelihood = B(0, static_cast<Eigen::Index>(g.start()));
    return fb;
}

/// Best path: score plus the node occupied after each frame and the full
/// node sequence visited (non-emitting nodes included).
struct ViterbiPath {
    double score = kLogZero;
    std::vector<std::size_t> frame_nodes;  // emitting node consuming frame t
    struct Step {
        std::size_t node;
        Eigen::Index t;  // frames consumed when the node is occupied
    };
    std::vector<Step> steps;
};

/// Max-product decoding. Candidates are examined in arc-creation order and
/// only a strictly better score replaces the incumbent, so ties keep the
/// earliest-built predecessor.
inline ViterbiPath viterbi(SearchGraph& g, const Eigen::MatrixXd& emis) {
    g.finalize();
    const Eigen::Index T = emis.rows();
    const std::size_t n = g.nodes().size();
    const auto& nodes = g.nodes();
    const auto& arcs = g.arcs();
    constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

    std::vector<double> prev(n, kLogZero), cur(n, kLogZero);
    std::vector<std::uint32_t> back(static_cast<std::size_t>(T + 1) * n, kNone);
    auto bp = [&](Eigen::Index t, std::size_t v) -> std::uint32_t& { return back[static_cast<std::size_t>(t) * n + v]; };

    for (Eigen::Index t = 0; t <= T; ++t) {
        std::fill(cur.begin(), cur.end(), kLogZero);
        if (t == 0) {
            cur[g.start()] = 0.0;
        } else {
            for (auto v : g.emitting_nodes()) {
                double best = kLogZero;
                std::uint32_t arg = kNone;
                for (auto ai : g.incoming(v)) {
                    const auto& a = arcs[ai];
                    const double s = prev[a.from] + a.logw;
                    if (s > best) {
                        best = s;
                        arg = static_cast<std::uint32_t>(ai);
                    }
                }
                if (arg != kNone) {
                    cur[v] = best + emis(t - 1, static_cast<Eigen::Index>(nodes[v].pool_state));
                    bp(t, v) = arg;
                }
            }
        }
        for (auto v : g.topo_order()) {
            double best = cur[v];
            std::uint32_t arg = kNone;
            for (auto ai : g.incoming(v)) {
                const auto& a = arcs[ai];
                const double s = cur[a.from] + a.logw;
                if (s > best) {
                    best = s;
                    arg = static_cast<std::uint32_t>(ai);
                }
            }
            if (arg != kNone) {
                cur[v] = best;
                bp(t, v) = arg;
            }
        }
        std::swap(prev, cur);
    }

    ViterbiPath path;
    path.score = prev[g.end()];
    if (path.score == kLogZero) return path;
    path.frame_nodes.assign(static_cast<std::size_t>(T), 0);
    std::size_t v = g.end();
    Eigen::Index t = T;
    while (true) {
        path.steps.push_back({v, t});
        if (nodes[v].emitting) path.frame_nodes[static_cast<std::size_t>(t - 1)] = v;
        const auto arg = bp(t, v);
        if (arg == kNone) break;
        const bool was_emitting = nodes[v].emitting;
        v = arcs[arg].from;
        if (was_emitting) --t;
    }
    std::reverse(path.steps.begin(), path.steps.end());
    return path;
}

}  // namespace vislip
