#pragma once

// Brute-force reference implementations used to cross-check the library.
// They share no code paths with it beyond plain data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "vislip/hmm.hpp"
#include "vislip/lm_network.hpp"
#include "vislip/rng.hpp"
#include "vislip/scoring.hpp"

namespace oracle {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ------------------------------------------------ exhaustive Viterbi

/// Single-Gaussian emission log density computed directly.
inline double gauss_log(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, const Eigen::VectorXd& x) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d)
        s += -0.5 * (std::log(2.0 * std::numbers::pi * var[d]) + (x[d] - mean[d]) * (x[d] - mean[d]) / var[d]);
    return s;
}

struct BestPath {
    double score = kNegInf;
    std::vector<std::string> words;
};

/// Enumerates every word sequence and every state path through a
/// one-model-per-word network without fillers. Each word w has the model
/// `models.at(net.expansions[w][0][0])`; arcs carry lm_scale * logp + penalty.
inline BestPath enumerate_decode(const vislip::ModelSet& models, const vislip::WordNetwork& net,
                                 const vislip::ObservationMatrix& frames, double lm_scale, double penalty) {
    const int T = static_cast<int>(frames.rows());
    BestPath best;
    std::vector<std::string> words;
    auto emis = [&](const vislip::GmmHmm& m, int s, int t) {
        const auto& st = models.pool[m.states[static_cast<std::size_t>(s - 1)]];
        return std::log(st.weights[0]) + gauss_log(st.means[0], st.vars[0], frames.row(t).transpose());
    };
    // Inside word `node`, in emitting state s, having consumed frames [0, t].
    std::function<void(std::size_t, int, int, double)> in_word;
    std::function<void(std::size_t, int, double)> at_word_end;
    auto enter = [&](std::size_t node, int t, double score) {
        // t frames consumed before entering
        const auto& m = models.at(net.expansions.at(net.nodes[node])[0][0]);
        for (int s = 1; s <= m.n_states; ++s) {
            const double p = m.trans(0, s);
            if (p <= 0.0 || t >= T) continue;
            in_word(node, s, t, score + std::log(p) + emis(m, s, t));
        }
    };
    in_word = [&](std::size_t node, int s, int t, double score) {
        const auto& m = models.at(net.expansions.at(net.nodes[node])[0][0]);
        const int exit = m.n_states + 1;
        if (m.trans(s, exit) > 0.0) at_word_end(node, t + 1, score + std::log(m.trans(s, exit)));
        for (int j = 1; j <= m.n_states; ++j) {
            const double p = m.trans(s, j);
            if (p <= 0.0 || t + 1 >= T) continue;
            in_word(node, j, t + 1, score + std::log(p) + emis(m, j, t + 1));
        }
    };
    at_word_end = [&](std::size_t node, int t, double score) {
        for (const auto& a : net.arcs) {
            if (a.from != node) continue;
            if (a.to == net.end()) {
                if (t == T && score + lm_scale * a.logp > best.score) {
                    best.score = score + lm_scale * a.logp;
                    best.words = words;
                }
                continue;
            }
            words.push_back(net.nodes[a.to]);
            enter(a.to, t, score + lm_scale * a.logp + penalty);
            words.pop_back();
        }
    };
    at_word_end(net.start(), 0, 0.0);
    return best;
}

/// Log of the summed probability of every complete path, same model as above.
inline double enumerate_total(const vislip::ModelSet& models, const vislip::WordNetwork& net,
                              const vislip::ObservationMatrix& frames, double lm_scale, double penalty) {
    const int T = static_cast<int>(frames.rows());
    double total = 0.0;
    auto emis = [&](const vislip::GmmHmm& m, int s, int t) {
        const auto& st = models.pool[m.states[static_cast<std::size_t>(s - 1)]];
        return st.weights[0] * std::exp(gauss_log(st.means[0], st.vars[0], frames.row(t).transpose()));
    };
    std::function<void(std::size_t, int, int, double)> in_word;
    std::function<void(std::size_t, int, double)> at_word_end;
    in_word = [&](std::size_t node, int s, int t, double p) {
        const auto& m = models.at(net.expansions.at(net.nodes[node])[0][0]);
        const int exit = m.n_states + 1;
        if (m.trans(s, exit) > 0.0) at_word_end(node, t + 1, p * m.trans(s, exit));
        for (int j = 1; j <= m.n_states; ++j)
            if (m.trans(s, j) > 0.0 && t + 1 < T) in_word(node, j, t + 1, p * m.trans(s, j) * emis(m, j, t + 1));
    };
    at_word_end = [&](std::size_t node, int t, double p) {
        for (const auto& a : net.arcs) {
            if (a.from != node) continue;
            const double w = std::exp(lm_scale * a.logp);
            if (a.to == net.end()) {
                if (t == T) total += p * w;
                continue;
            }
            const auto& m = models.at(net.expansions.at(net.nodes[a.to])[0][0]);
            for (int s = 1; s <= m.n_states; ++s)
                if (m.trans(0, s) > 0.0 && t < T)
                    in_word(a.to, s, t, p * w * std::exp(penalty) * m.trans(0, s) * emis(m, s, t));
        }
    };
    at_word_end(net.start(), 0, 1.0);
    return total > 0.0 ? std::log(total) : kNegInf;
}

// ------------------------------------------------ edit alignment

struct EditResult {
    long cost = std::numeric_limits<long>::max();
};

/// Minimum cost over every alignment of ref and hyp, by full recursion.
inline long enumerate_edit_cost(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                                const vislip::EditCosts& c, std::size_t i = 0, std::size_t j = 0) {
    if (i == ref.size()) return static_cast<long>(hyp.size() - j) * c.insertion;
    if (j == hyp.size()) return static_cast<long>(ref.size() - i) * c.deletion;
    const long diag = (ref[i] == hyp[j] ? 0 : c.substitution) + enumerate_edit_cost(ref, hyp, c, i + 1, j + 1);
    const long del = c.deletion + enumerate_edit_cost(ref, hyp, c, i + 1, j);
    const long ins = c.insertion + enumerate_edit_cost(ref, hyp, c, i, j + 1);
    return std::min({diag, del, ins});
}

// ------------------------------------------------ Jacobi eigensolver

struct Eigen_ {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // columns
};

/// Cyclic Jacobi rotations on a symmetric matrix until off-diagonal mass vanishes.
inline Eigen_ jacobi_eigen(Eigen::MatrixXd a) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
    Eigen_ out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values[k] = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
        out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
    }
    return out;
}

/// Sample covariance (n - 1) of the rows of x.
inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - mean;
    return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

/// Smallest k whose leading eigenvalues reach `fraction` of the total.
inline Eigen::Index modes_needed(const Eigen::VectorXd& desc, double fraction) {
    const double total = desc.cwiseMax(0.0).sum();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < desc.size(); ++k) {
        acc += std::max(0.0, desc[k]);
        if (acc >= fraction * total * (1.0 - 1e-12)) return k + 1;
    }
    return desc.size();
}

// ------------------------------------------------ Spearman permutations

/// Exact two-tailed p for tie-free ranks, counted with integer sums of
/// squared rank differences over every permutation.
inline double spearman_permutation_p(const std::vector<int>& a, const std::vector<int>& b) {
    const long n = static_cast<long>(a.size());
    const long scale = n * (n * n - 1);
    auto d2 = [&](const std::vector<int>& bb) {
        long s = 0;
        for (long i = 0; i < n; ++i) s += static_cast<long>(a[i] - bb[i]) * (a[i] - bb[i]);
        return s;
    };
    const long obs = std::labs(scale - 6 * d2(b));
    std::vector<int> perm = b;
    std::sort(perm.begin(), perm.end());
    long hits = 0, total = 0;
    do {
        if (std::labs(scale - 6 * d2(perm)) >= obs) ++hits;
        ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(hits) / static_cast<double>(total);
}

inline double spearman_formula(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace oracle
