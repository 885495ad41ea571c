#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/linear_model.hpp"
#include "vislip/text_io.hpp"

namespace vislip {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
    if (a == kLogZero) return b;
    if (b == kLogZero) return a;
    if (a < b) std::swap(a, b);
    return a + std::log1p(std::exp(b - a));
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

/// Diagonal-covariance Gaussian mixture emitting state.
struct MixtureState {
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::VectorXd> vars;
    std::vector<double> log_consts;  // log w_m - 0.5 (d log 2pi + sum log var)

    std::size_t n_mix() const { return weights.size(); }

    void refresh() {
        log_consts.assign(weights.size(), kLogZero);
        for (std::size_t m = 0; m < weights.size(); ++m) {
            const double d = static_cast<double>(means[m].size());
            log_consts[m] = safe_log(weights[m]) - 0.5 * (d * std::log(2.0 * std::numbers::pi) +
                                                          vars[m].array().log().sum());
        }
    }

    /// Weighted log density of component m.
    template <typename Row>
    double component_log(std::size_t m, const Row& x) const {
        if (log_consts[m] == kLogZero) return kLogZero;
        return log_consts[m] - 0.5 * ((x.transpose() - means[m]).array().square() / vars[m].array()).sum();
    }

    template <typename Row>
    double log_likelihood(const Row& x) const {
        double acc = kLogZero;
        for (std::size_t m = 0; m < weights.size(); ++m) acc = log_add(acc, component_log(m, x));
        return acc;
    }

    bool operator==(const MixtureState& o) const {
        return weights == o.weights && means == o.means && vars == o.vars;
    }
};

/// Left-to-right HMM with non-emitting entry (0) and exit (n_states + 1).
/// Emitting states refer into the owning ModelSet's state pool, so two models
/// naming the same pool index share parameters.
struct GmmHmm {
    std::string label;
    int n_states = 0;
    Eigen::MatrixXd trans;            // (n_states + 2)^2 probabilities
    std::vector<std::size_t> states;  // pool index per emitting state

    int exit_index() const { return n_states + 1; }
    bool has_tee() const { return trans(0, exit_index()) > 0.0; }

    /// Fewest frames any entry-to-exit path consumes.
    int min_frames() const {
        const int n = n_states + 2;
        std::vector<int> best(n, std::numeric_limits<int>::max());
        best[0] = 0;
        for (int i = 0; i < n; ++i) {
            if (best[i] == std::numeric_limits<int>::max()) continue;
            for (int j = i + 1; j < n; ++j)
                if (trans(i, j) > 0.0) best[j] = std::min(best[j], best[i] + (j == n - 1 ? 0 : 1));
        }
        return best[n - 1];
    }
};

/// The trained classifier bank: one HMM per label over a shared state pool.
class ModelSet {
public:
    int feature_dim = 0;
    Eigen::VectorXd var_floor;
    Eigen::VectorXd global_mean;
    Eigen::VectorXd global_var;
    std::vector<MixtureState> pool;
    std::vector<std::string> pool_tags;  // non-empty marks a tied state
    std::map<std::string, GmmHmm> models;

    bool contains(std::string_view label) const { return models.count(std::string(label)) != 0; }

    const GmmHmm& at(std::string_view label) const {
        auto it = models.find(std::string(label));
        if (it == models.end()) throw Error("no model for label '" + std::string(label) + "'");
        return it->second;
    }
    GmmHmm& at(std::string_view label) {
        auto it = models.find(std::string(label));
        if (it == models.end()) throw Error("no model for label '" + std::string(label) + "'");
        return it->second;
    }

    const MixtureState& state(const GmmHmm& m, int emitting_index) const { return pool[m.states[emitting_index]]; }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (const auto& [l, _] : models) out.push_back(l);
        return out;
    }

    /// Drops pool states no model refers to and renumbers the rest in order.
    void compact() {
        std::vector<long> remap(pool.size(), -1);
        for (const auto& [_, m] : models)
            for (auto s : m.states) remap[s] = 0;
        std::vector<MixtureState> new_pool;
        std::vector<std::string> new_tags;
        for (std::size_t s = 0; s < pool.size(); ++s) {
            if (remap[s] < 0) continue;
            remap[s] = static_cast<long>(new_pool.size());
            new_pool.push_back(std::move(pool[s]));
            new_tags.push_back(std::move(pool_tags[s]));
        }
        for (auto& [_, m] : models)
            for (auto& s : m.states) s = static_cast<std::size_t>(remap[s]);
        pool = std::move(new_pool);
        pool_tags = std::move(new_tags);
    }

    /// Throws when a structural or stochastic invariant is broken.
    void validate(double tol = 1e-9) const {
        for (const auto& [label, m] : models) {
            const int n = m.n_states + 2;
            if (m.trans.rows() != n || m.trans.cols() != n) throw Error(label + ": transition matrix has wrong size");
            if (static_cast<int>(m.states.size()) != m.n_states) throw Error(label + ": state count mismatch");
            for (int i = 0; i < n; ++i) {
                double row = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double a = m.trans(i, j);
                    if (a < 0.0) throw Error(label + ": negative transition probability");
                    if (a > 0.0 && (j < i || (i == 0 && j == 0) || i == n - 1))
                        throw Error(label + ": transition " + std::to_string(i) + "->" + std::to_string(j) +
                                    " breaks the left-to-right topology");
                    row += a;
                }
                if (i < n - 1 && std::abs(row - 1.0) > tol)
                    throw Error(label + ": transition row " + std::to_string(i) + " sums to " +
                                text::format_g17(row));
            }
            for (auto s : m.states)
                if (s >= pool.size()) throw Error(label + ": state index out of range");
        }
        for (std::size_t s = 0; s < pool.size(); ++s) {
            const auto& st = pool[s];
            double w = 0.0;
            for (std::size_t c = 0; c < st.n_mix(); ++c) {
                w += st.weights[c];
                if (st.means[c].size() != feature_dim || st.vars[c].size() != feature_dim)
                    throw Error("pool state " + std::to_string(s) + " has the wrong dimension");
                for (int d = 0; d < feature_dim; ++d)
                    if (st.vars[c][d] < var_floor[d] * (1.0 - 1e-12))
                        throw Error("pool state " + std::to_string(s) + " variance below floor");
            }
            if (std::abs(w - 1.0) > tol) throw Error("pool state " + std::to_string(s) + " weights do not sum to 1");
        }
    }
};

/// Left-to-right transitions with a self-loop and a forward arc per emitting
/// state, each 0.5.
inline Eigen::MatrixXd left_to_right_transitions(int n_states) {
    const int n = n_states + 2;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
    t(0, 1) = 1.0;
    for (int i = 1; i <= n_states; ++i) {
        t(i, i) = 0.5;
        t(i, i + 1) = 0.5;
    }
    return t;
}

struct FlatStartOptions {
    bool jitter = true;
    double jitter_scale = 0.2;
    double floor_factor = 1e-4;
};

struct FlatStartResult {
    ModelSet models;
    std::vector<std::string> warnings;
};

/// Every state of every model receives the global mean and variance of
/// `data`. Component j's mean is offset by
/// jitter_scale * sigma * (j - (M - 1) / 2) / M so the components can separate.
inline FlatStartResult flat_start(std::span<const std::string> labels, int n_states, int n_mix,
                                  std::span<const ObservationMatrix> data, const FlatStartOptions& opt = {}) {
    if (n_states < 1) throw Error("flat start needs at least one emitting state");
    if (n_mix < 1) throw Error("flat start needs at least one mixture component");
    if (labels.empty()) throw Error("flat start needs at least one label");
    FlatStartResult out;
    Eigen::Index dim = -1;
    double count = 0.0;
    for (const auto& m : data) {
        if (m.rows() == 0) continue;
        if (dim < 0) dim = m.cols();
        if (m.cols() != dim) throw DimensionError("training frames disagree on feature dimension");
        count += static_cast<double>(m.rows());
    }
    if (dim < 0 || count == 0.0) throw Error("flat start needs non-empty training data");

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
    for (const auto& m : data) {
        if (m.rows() == 0) continue;
        sum += m.colwise().sum().transpose();
        sq += m.array().square().matrix().colwise().sum().transpose();
    }
    Eigen::VectorXd mean = sum / count;
    Eigen::VectorXd var = (sq / count - mean.array().square().matrix()).cwiseMax(0.0);

    ModelSet& ms = out.models;
    ms.feature_dim = static_cast<int>(dim);
    ms.var_floor.resize(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
        if (var[d] <= 0.0) {
            out.warnings.push_back("dimension " + std::to_string(d) + " has zero variance; flooring");
            ms.var_floor[d] = opt.floor_factor;
            var[d] = opt.floor_factor;
        } else {
            ms.var_floor[d] = opt.floor_factor * var[d];
        }
    }
    ms.global_mean = mean;
    ms.global_var = var;

    MixtureState proto;
    const Eigen::VectorXd sigma = var.cwiseSqrt();
    for (int j = 0; j < n_mix; ++j) {
        const double offset =
            opt.jitter ? opt.jitter_scale * (j - (n_mix - 1) / 2.0) / static_cast<double>(n_mix) : 0.0;
        proto.weights.push_back(1.0 / n_mix);
        proto.means.push_back(mean + offset * sigma);
        proto.vars.push_back(var);
    }
    proto.refresh();

    for (const auto& label : labels) {
        if (ms.models.count(label)) throw Error("duplicate label '" + label + "'");
        GmmHmm m;
        m.label = label;
        m.n_states = n_states;
        m.trans = left_to_right_transitions(n_states);
        for (int s = 0; s < n_states; ++s) {
            m.states.push_back(ms.pool.size());
            ms.pool.push_back(proto);
            ms.pool_tags.emplace_back();
        }
        ms.models.emplace(label, std::move(m));
    }
    return out;
}

/// Rebuilds `sp_label` as one emitting state plus a tee skip, sharing the
/// middle emitting state of `sil_label`.
inline ModelSet tie_silence_models(ModelSet models, std::string_view sil_label = "sil",
                                   std::string_view sp_label = "sp") {
    if (!models.contains(sil_label)) throw Error("cannot tie: no '" + std::string(sil_label) + "' model");
    if (!models.contains(sp_label)) throw Error("cannot tie: no '" + std::string(sp_label) + "' model");
    const GmmHmm& sil = models.at(sil_label);
    const int mid = sil.n_states / 2;
    const std::size_t shared = sil.states[mid];
    models.pool_tags[shared] = std::string(sil_label) + "_s" + std::to_string(mid + 1);

    GmmHmm& sp = models.at(sp_label);
    sp.n_states = 1;
    sp.states = {shared};
    sp.trans = Eigen::MatrixXd::Zero(3, 3);
    sp.trans(0, 1) = 0.5;
    sp.trans(0, 2) = 0.5;
    sp.trans(1, 1) = 0.5;
    sp.trans(1, 2) = 0.5;
    models.compact();
    return models;
}

/// Block file: `~modelset`, variance floor, tagged pool states, then models.
inline std::string save_model_set(const ModelSet& ms) {
    auto vec = [](const Eigen::VectorXd& v) {
        std::string s;
        for (Eigen::Index i = 0; i < v.size(); ++i) s += " " + text::format_g17(v[i]);
        return s;
    };
    std::string out = "~modelset " + std::to_string(ms.feature_dim) + " " + std::to_string(ms.pool.size()) + " " +
                      std::to_string(ms.models.size()) + "\n";
    out += "varfloor" + vec(ms.var_floor) + "\n";
    out += "globalmean" + vec(ms.global_mean) + "\n";
    out += "globalvar" + vec(ms.global_var) + "\n";
    for (std::size_t s = 0; s < ms.pool.size(); ++s) {
        const auto& st = ms.pool[s];
        out += "~state " + std::to_string(s) + " " + (ms.pool_tags[s].empty() ? "-" : ms.pool_tags[s]) + " " +
               std::to_string(st.n_mix()) + "\n";
        for (std::size_t m = 0; m < st.n_mix(); ++m) {
            out += "weight " + text::format_g17(st.weights[m]) + "\n";
            out += "mean" + vec(st.means[m]) + "\n";
            out += "var" + vec(st.vars[m]) + "\n";
        }
    }
    for (const auto& [label, m] : ms.models) {
        out += "~model " + label + " " + std::to_string(m.n_states) + "\n";
        out += "states";
        for (auto s : m.states) out += " " + std::to_string(s);
        out += "\n";
        for (Eigen::Index i = 0; i < m.trans.rows(); ++i) {
            out += "trans";
            for (Eigen::Index j = 0; j < m.trans.cols(); ++j) out += " " + text::format_g17(m.trans(i, j));
            out += "\n";
        }
    }
    return out;
}

inline ModelSet load_model_set(std::string_view contents) {
    const auto ls = text::lines(contents);
    std::size_t i = 0;
    auto next = [&](std::string_view key) {
        while (i < ls.size() && text::trim(ls[i]).empty()) ++i;
        if (i >= ls.size()) throw ParseError("unexpected end of model file", i + 1);
        auto toks = text::split_ws(ls[i]);
        if (toks[0] != key) throw ParseError("expected '" + std::string(key) + "', found '" + toks[0] + "'", i + 1);
        ++i;
        return toks;
    };
    auto vec = [&](const std::vector<std::string>& toks, std::size_t dim) {
        if (toks.size() != dim + 1) throw ParseError("vector has wrong length", i);
        Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < dim; ++k) v[static_cast<Eigen::Index>(k)] = text::parse_double(toks[k + 1], i);
        return v;
    };
    ModelSet ms;
    auto head = next("~modelset");
    if (head.size() != 4) throw ParseError("malformed ~modelset header", 1);
    ms.feature_dim = static_cast<int>(text::parse_int(head[1], 1));
    const auto n_pool = static_cast<std::size_t>(text::parse_int(head[2], 1));
    const auto n_models = static_cast<std::size_t>(text::parse_int(head[3], 1));
    const auto dim = static_cast<std::size_t>(ms.feature_dim);
    ms.var_floor = vec(next("varfloor"), dim);
    ms.global_mean = vec(next("globalmean"), dim);
    ms.global_var = vec(next("globalvar"), dim);
    for (std::size_t s = 0; s < n_pool; ++s) {
        auto st_head = next("~state");
        if (st_head.size() != 4 || static_cast<std::size_t>(text::parse_int(st_head[1], i)) != s)
            throw ParseError("malformed ~state header", i);
        MixtureState st;
        const auto n_mix = static_cast<std::size_t>(text::parse_int(st_head[3], i));
        for (std::size_t m = 0; m < n_mix; ++m) {
            auto w = next("weight");
            st.weights.push_back(text::parse_double(w.at(1), i));
            st.means.push_back(vec(next("mean"), dim));
            st.vars.push_back(vec(next("var"), dim));
        }
        st.refresh();
        ms.pool.push_back(std::move(st));
        ms.pool_tags.push_back(st_head[2] == "-" ? std::string() : st_head[2]);
    }
    for (std::size_t k = 0; k < n_models; ++k) {
        auto mh = next("~model");
        if (mh.size() != 3) throw ParseError("malformed ~model header", i);
        GmmHmm m;
        m.label = mh[1];
        m.n_states = static_cast<int>(text::parse_int(mh[2], i));
        auto st = next("states");
        for (std::size_t j = 1; j < st.size(); ++j) m.states.push_back(static_cast<std::size_t>(text::parse_int(st[j], i)));
        const int n = m.n_states + 2;
        m.trans.resize(n, n);
        for (int r = 0; r < n; ++r) m.trans.row(r) = vec(next("trans"), static_cast<std::size_t>(n)).transpose();
        ms.models.emplace(m.label, std::move(m));
    }
    ms.validate(1e-6);
    return ms;
}

}  // namespace vislip
