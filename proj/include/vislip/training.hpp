#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vislip/decoder.hpp"
#include "vislip/error.hpp"
#include "vislip/hmm.hpp"
#include "vislip/search_graph.hpp"

namespace vislip {

struct BaumWelchOptions {
    int iterations = 1;
    double min_occupancy = 2.0;  // components below this many frames are reset
    double min_weight = 1e-3;
    int jobs = 1;
};

struct BaumWelchResult {
    ModelSet models;
    /// Corpus log-likelihood before each update, plus one value after the last.
    std::vector<double> log_likelihood;
    std::vector<std::string> warnings;
    std::size_t used_utterances = 0;
};

/// Sufficient statistics of one or more utterances.
struct Accumulators {
    std::vector<std::vector<double>> occ;                 // [pool][mix]
    std::vector<std::vector<Eigen::VectorXd>> sum, sqsum;  // [pool][mix]
    std::map<std::string, Eigen::MatrixXd> trans;          // per model label
    double log_likelihood = 0.0;
    bool used = false;
    std::string skip_reason;

    explicit Accumulators(const ModelSet& ms) {
        occ.resize(ms.pool.size());
        sum.resize(ms.pool.size());
        sqsum.resize(ms.pool.size());
        for (std::size_t s = 0; s < ms.pool.size(); ++s) {
            const auto M = ms.pool[s].n_mix();
            occ[s].assign(M, 0.0);
            sum[s].assign(M, Eigen::VectorXd::Zero(ms.feature_dim));
            sqsum[s].assign(M, Eigen::VectorXd::Zero(ms.feature_dim));
        }
        for (const auto& [label, m] : ms.models)
            trans.emplace(label, Eigen::MatrixXd::Zero(m.trans.rows(), m.trans.cols()));
    }

    void add(const Accumulators& o) {
        if (!o.used) return;
        for (std::size_t s = 0; s < occ.size(); ++s)
            for (std::size_t m = 0; m < occ[s].size(); ++m) {
                occ[s][m] += o.occ[s][m];
                sum[s][m] += o.sum[s][m];
                sqsum[s][m] += o.sqsum[s][m];
            }
        for (auto& [label, t] : trans) t += o.trans.at(label);
        log_likelihood += o.log_likelihood;
        used = true;
    }
};

/// Fewest frames a label sequence can occupy.
inline int min_frames(const ModelSet& models, std::span<const std::string> labels) {
    int total = 0;
    for (const auto& l : labels) total += models.at(l).min_frames();
    return total;
}

/// E-step for one utterance: forward-backward over the concatenated models.
inline Accumulators accumulate_utterance(const ModelSet& models, const ObservationMatrix& frames,
                                         std::span<const std::string> labels) {
    Accumulators acc(models);
    if (frames.cols() != models.feature_dim) throw DimensionError("utterance feature dimension mismatch");
    const auto need = min_frames(models, labels);
    if (frames.rows() < need) {
        acc.skip_reason = "needs at least " + std::to_string(need) + " frames, has " + std::to_string(frames.rows());
        return acc;
    }
    auto eg = expand_label_chain(models, labels);
    auto& g = eg.graph;
    const auto emis = emission_table(models, frames);
    const auto fb = forward_backward(g, emis);
    const double lp = fb.log_likelihood;
    if (lp == kLogZero || !std::isfinite(lp)) {
        acc.skip_reason = "zero likelihood";
        return acc;
    }
    acc.used = true;
    acc.log_likelihood = lp;
    const Eigen::Index T = frames.rows();
    const auto& nodes = g.nodes();

    for (auto v : g.emitting_nodes()) {
        const auto ps = nodes[v].pool_state;
        const auto& st = models.pool[ps];
        for (Eigen::Index t = 1; t <= T; ++t) {
            const double lg = fb.alpha(t, static_cast<Eigen::Index>(v)) + fb.beta(t, static_cast<Eigen::Index>(v)) - lp;
            if (lg == kLogZero) continue;
            const double gamma = std::exp(lg);
            if (gamma == 0.0) continue;
            const auto x = frames.row(t - 1);
            const double total = emis(t - 1, static_cast<Eigen::Index>(ps));
            for (std::size_t m = 0; m < st.n_mix(); ++m) {
                const double post = gamma * std::exp(st.component_log(m, x) - total);
                if (post == 0.0) continue;
                acc.occ[ps][m] += post;
                acc.sum[ps][m] += post * x.transpose();
                acc.sqsum[ps][m] += post * x.transpose().array().square().matrix();
            }
        }
    }

    for (const auto& a : g.arcs()) {
        if (a.instance < 0) continue;
        const auto& to = nodes[a.to];
        const auto& from = nodes[a.from];
        const auto f = static_cast<Eigen::Index>(a.from);
        const auto tt = static_cast<Eigen::Index>(a.to);
        double c = kLogZero;
        if (to.emitting) {
            const auto ps = static_cast<Eigen::Index>(to.pool_state);
            for (Eigen::Index t = from.emitting ? 1 : 0; t < T; ++t)
                c = log_add(c, fb.alpha(t, f) + a.logw + emis(t, ps) + fb.beta(t + 1, tt));
        } else {
            for (Eigen::Index t = from.emitting ? 1 : 0; t <= T; ++t)
                c = log_add(c, fb.alpha(t, f) + a.logw + fb.beta(t, tt));
        }
        if (c == kLogZero) continue;
        const auto& label = g.instances()[static_cast<std::size_t>(a.instance)].label;
        acc.trans.at(label)(a.ti, a.tj) += std::exp(c - lp);
    }
    return acc;
}

/// Total log-likelihood of a corpus under `models` (skipped utterances excluded).
inline double corpus_log_likelihood(const ModelSet& models, std::span<const ObservationMatrix> frames,
                                    std::span<const std::vector<std::string>> labels) {
    double total = 0.0;
    for (std::size_t u = 0; u < frames.size(); ++u) {
        if (frames[u].rows() < min_frames(models, labels[u])) continue;
        auto eg = expand_label_chain(models, labels[u]);
        const auto fb = forward_backward(eg.graph, emission_table(models, frames[u]));
        if (std::isfinite(fb.log_likelihood)) total += fb.log_likelihood;
    }
    return total;
}

namespace detail {

inline Accumulators accumulate_corpus(const ModelSet& models, std::span<const ObservationMatrix> frames,
                                      std::span<const std::vector<std::string>> labels, int jobs,
                                      std::vector<std::string>& warnings, std::size_t& used) {
    Accumulators total(models);
    used = 0;
    const std::size_t n = frames.size();
    const std::size_t batch = static_cast<std::size_t>(std::max(1, jobs));
    for (std::size_t b = 0; b < n; b += batch) {
        const std::size_t e = std::min(n, b + batch);
        std::vector<Accumulators> parts;
        parts.reserve(e - b);
        for (std::size_t u = b; u < e; ++u) parts.emplace_back(models);
        if (batch == 1) {
            parts[0] = accumulate_utterance(models, frames[b], labels[b]);
        } else {
            std::vector<std::thread> workers;
            std::vector<std::exception_ptr> errors(e - b);
            for (std::size_t u = b; u < e; ++u)
                workers.emplace_back([&, u] {
                    try {
                        parts[u - b] = accumulate_utterance(models, frames[u], labels[u]);
                    } catch (...) {
                        errors[u - b] = std::current_exception();
                    }
                });
            for (auto& w : workers) w.join();
            for (auto& ep : errors)
                if (ep) std::rethrow_exception(ep);
        }
        // Reduction runs in utterance order so results do not depend on `jobs`.
        for (std::size_t u = b; u < e; ++u) {
            const auto& p = parts[u - b];
            if (!p.used) {
                warnings.push_back("utterance " + std::to_string(u) + " skipped: " + p.skip_reason);
                continue;
            }
            total.add(p);
            ++used;
        }
    }
    return total;
}

}  // namespace detail

/// M-step from pooled statistics. Components with less than
/// `min_occupancy` frames restart from the global mean/variance at weight
/// `min_weight`; states that saw no data keep their parameters.
inline void reestimate(ModelSet& models, const Accumulators& acc, const BaumWelchOptions& opt,
                       std::vector<std::string>& warnings) {
    for (std::size_t s = 0; s < models.pool.size(); ++s) {
        auto& st = models.pool[s];
        double state_occ = 0.0;
        for (double o : acc.occ[s]) state_occ += o;
        if (state_occ <= 0.0) continue;
        std::vector<double> w(st.n_mix());
        for (std::size_t m = 0; m < st.n_mix(); ++m) {
            const double o = acc.occ[s][m];
            if (o < opt.min_occupancy) {
                st.means[m] = models.global_mean;
                st.vars[m] = models.global_var.cwiseMax(models.var_floor);
                w[m] = opt.min_weight;
                warnings.push_back("pool state " + std::to_string(s) + " component " + std::to_string(m) +
                                   " starved (occupancy " + text::format_double(o) + "); reset");
                continue;
            }
            st.means[m] = acc.sum[s][m] / o;
            st.vars[m] = (acc.sqsum[s][m] / o - st.means[m].array().square().matrix()).cwiseMax(models.var_floor);
            w[m] = o / state_occ;
        }
        double wsum = 0.0;
        for (double x : w) wsum += x;
        for (std::size_t m = 0; m < st.n_mix(); ++m) st.weights[m] = w[m] / wsum;
        st.refresh();
    }
    for (auto& [label, m] : models.models) {
        const auto& c = acc.trans.at(label);
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            const double row = c.row(i).sum();
            if (row <= 0.0) continue;
            m.trans.row(i) = c.row(i) / row;
        }
    }
}

/// Embedded re-estimation: each utterance's label sequence is concatenated
/// into one HMM and all parameters are updated from forward-backward
/// statistics, without pruning.
inline BaumWelchResult baum_welch(ModelSet models, std::span<const ObservationMatrix> frames,
                                  std::span<const std::vector<std::string>> labels, const BaumWelchOptions& opt) {
    if (opt.iterations < 1) throw Error("Baum-Welch needs at least one iteration");
    if (frames.size() != labels.size()) throw Error("frame and transcript counts differ");
    BaumWelchResult r;
    for (int it = 0; it < opt.iterations; ++it) {
        std::vector<std::string> skips;
        std::size_t used = 0;
        const auto acc = detail::accumulate_corpus(models, frames, labels, opt.jobs, skips, used);
        if (used == 0) throw Error("re-estimation skipped every utterance");
        if (it == 0) r.warnings.insert(r.warnings.end(), skips.begin(), skips.end());
        r.used_utterances = used;
        r.log_likelihood.push_back(acc.log_likelihood);
        reestimate(models, acc, opt, r.warnings);
    }
    r.log_likelihood.push_back(corpus_log_likelihood(models, frames, labels));
    r.models = std::move(models);
    return r;
}

}  // namespace vislip
