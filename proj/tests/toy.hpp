#pragma once

// Small random decoding problems shared by the unit and acceptance tests.

#include <string>
#include <vector>

#include "vislip/hmm.hpp"
#include "vislip/lm_network.hpp"
#include "vislip/rng.hpp"

namespace toy {

struct Instance {
    vislip::ModelSet models;
    vislip::WordNetwork net;
    vislip::ObservationMatrix frames;
    double lm_scale = 1.0;
    double penalty = 0.0;
};

/// Up to three single-Gaussian models of one or two emitting states, one
/// word per model, random bigram arcs and up to six frames.
inline Instance make_instance(vislip::Rng& rng) {
    Instance inst;
    const int n_models = static_cast<int>(rng.between(1, 3));
    const int dim = static_cast<int>(rng.between(1, 2));
    auto& ms = inst.models;
    ms.feature_dim = dim;
    ms.var_floor = Eigen::VectorXd::Constant(dim, 1e-6);
    ms.global_mean = Eigen::VectorXd::Zero(dim);
    ms.global_var = Eigen::VectorXd::Ones(dim);
    const std::string names = "abc";
    for (int k = 0; k < n_models; ++k) {
        vislip::GmmHmm m;
        m.label = std::string(1, names[static_cast<std::size_t>(k)]);
        m.n_states = static_cast<int>(rng.between(1, 2));
        const int n = m.n_states + 2;
        m.trans = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n - 1; ++i) {
            // Row i spreads over states i..exit (entry cannot skip to exit).
            const int lo = std::max(i, 1);
            const int hi = i == 0 ? n - 2 : n - 1;
            double total = 0.0;
            for (int j = lo; j <= hi; ++j) total += m.trans(i, j) = rng.uniform(0.05, 1.0);
            for (int j = lo; j <= hi; ++j) m.trans(i, j) /= total;
        }
        for (int s = 0; s < m.n_states; ++s) {
            vislip::MixtureState st;
            st.weights = {1.0};
            Eigen::VectorXd mean(dim), var(dim);
            for (int d = 0; d < dim; ++d) {
                mean[d] = rng.uniform(-2.0, 2.0);
                var[d] = rng.uniform(0.3, 2.0);
            }
            st.means = {mean};
            st.vars = {var};
            st.refresh();
            m.states.push_back(ms.pool.size());
            ms.pool.push_back(st);
            ms.pool_tags.emplace_back();
        }
        ms.models.emplace(m.label, m);
    }

    auto& net = inst.net;
    net.sil_label = "";
    net.sp_label = "";
    net.nodes.emplace_back(vislip::kSentenceStart);
    for (int k = 0; k < n_models; ++k) {
        const std::string w(1, static_cast<char>('A' + k));
        net.nodes.push_back(w);
        net.expansions[w] = {{std::string(1, names[static_cast<std::size_t>(k)])}};
    }
    net.nodes.emplace_back(vislip::kSentenceEnd);
    const std::size_t end = net.nodes.size() - 1;
    for (std::size_t f = 0; f < end; ++f)
        for (std::size_t t = 1; t <= end; ++t) {
            if (f == 0 && t == end) continue;
            // keep at least start->first word and every word->end
            const bool forced = (f == 0 && t == 1) || (f > 0 && t == end);
            if (forced || rng.uniform() < 0.7) net.arcs.push_back({f, t, std::log(rng.uniform(0.05, 1.0))});
        }

    const int T = static_cast<int>(rng.between(1, 6));
    inst.frames.resize(T, dim);
    for (int t = 0; t < T; ++t)
        for (int d = 0; d < dim; ++d) inst.frames(t, d) = rng.uniform(-3.0, 3.0);
    inst.lm_scale = rng.uniform(0.5, 2.0);
    inst.penalty = rng.uniform(-1.0, 1.0);
    return inst;
}

}  // namespace toy
