#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "toy.hpp"
#include "vislip/decoder.hpp"
#include "vislip/search_graph.hpp"

using namespace vislip;

TEST(Viterbi, MatchesExhaustiveSearch) {
    Rng rng(20240601);
    int decoded = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = toy::make_instance(rng);
        const auto ref = oracle::enumerate_decode(inst.models, inst.net, inst.frames, inst.lm_scale, inst.penalty);
        const DecodeOptions opt{inst.lm_scale, inst.penalty};
        if (ref.score == oracle::kNegInf) {
            EXPECT_THROW(viterbi_decode(inst.models, inst.net, inst.frames, opt), DecodeError) << trial;
            continue;
        }
        const auto got = viterbi_decode(inst.models, inst.net, inst.frames, opt);
        EXPECT_NEAR(got.score, ref.score, 1e-9) << trial;
        EXPECT_EQ(got.words, ref.words) << trial;
        ++decoded;
    }
    EXPECT_GT(decoded, 150);
}

TEST(ForwardBackward, MatchesExhaustiveSum) {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = toy::make_instance(rng);
        const DecodeOptions opt{inst.lm_scale, inst.penalty};
        auto eg = expand_network(inst.models, inst.net, opt);
        const auto fb = forward_backward(eg.graph, emission_table(inst.models, inst.frames));
        const double ref = oracle::enumerate_total(inst.models, inst.net, inst.frames, inst.lm_scale, inst.penalty);
        if (ref == oracle::kNegInf) {
            EXPECT_EQ(fb.log_likelihood, kLogZero) << trial;
            continue;
        }
        EXPECT_NEAR(fb.log_likelihood, ref, 1e-9) << trial;
        EXPECT_NEAR(fb.backward_log_likelihood, fb.log_likelihood, 1e-9) << trial;
    }
}

TEST(ForwardBackward, StateOccupancySumsToOnePerFrame) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = toy::make_instance(rng);
        auto eg = expand_network(inst.models, inst.net, {inst.lm_scale, inst.penalty});
        const auto fb = forward_backward(eg.graph, emission_table(inst.models, inst.frames));
        if (fb.log_likelihood == kLogZero) continue;
        for (Eigen::Index t = 1; t <= inst.frames.rows(); ++t) {
            double occ = 0.0;
            for (auto v : eg.graph.emitting_nodes()) {
                const auto i = static_cast<Eigen::Index>(v);
                occ += std::exp(fb.alpha(t, i) + fb.beta(t, i) - fb.log_likelihood);
            }
            EXPECT_NEAR(occ, 1.0, 1e-9);
        }
    }
}

TEST(Viterbi, TieKeepsEarliestArc) {
    // Two identical one-state models in parallel; the first built must win.
    GmmHmm m;
    m.n_states = 1;
    m.trans = Eigen::MatrixXd::Zero(3, 3);
    m.trans(0, 1) = 1.0;
    m.trans(1, 2) = 1.0;
    m.states = {0};
    SearchGraph g;
    const auto s = g.add_node({false, 0, -1, -1});
    const auto e = g.add_node({false, 0, -1, -1});
    m.label = "first";
    auto [e1, x1] = g.add_model(m);
    m.label = "second";
    auto [e2, x2] = g.add_model(m);
    g.add_arc(s, e1, 0.0);
    g.add_arc(s, e2, 0.0);
    g.add_arc(x1, e, 0.0);
    g.add_arc(x2, e, 0.0);
    g.set_start(s);
    g.set_end(e);
    const auto path = viterbi(g, Eigen::MatrixXd::Zero(1, 1));
    ASSERT_EQ(path.frame_nodes.size(), 1u);
    EXPECT_EQ(g.nodes()[path.frame_nodes[0]].instance, 0);
    EXPECT_EQ(path.score, 0.0);
}

TEST(SearchGraph, RejectsNonEmittingCycle) {
    SearchGraph g;
    const auto a = g.add_node({false, 0, -1, -1});
    const auto b = g.add_node({false, 0, -1, -1});
    g.add_arc(a, b, 0.0);
    g.add_arc(b, a, 0.0);
    EXPECT_THROW(g.finalize(), Error);
}

TEST(SearchGraph, ZeroFramesThroughTeeModel) {
    GmmHmm m;
    m.label = "sp";
    m.n_states = 1;
    m.trans = Eigen::MatrixXd::Zero(3, 3);
    m.trans(0, 1) = 0.4;
    m.trans(0, 2) = 0.6;
    m.trans(1, 1) = 0.5;
    m.trans(1, 2) = 0.5;
    m.states = {0};
    SearchGraph g;
    auto [entry, exit] = g.add_model(m);
    g.set_start(entry);
    g.set_end(exit);
    const auto fb = forward_backward(g, Eigen::MatrixXd::Zero(0, 1));
    EXPECT_NEAR(fb.log_likelihood, std::log(0.6), 1e-15);
    const auto vp = viterbi(g, Eigen::MatrixXd::Zero(0, 1));
    EXPECT_NEAR(vp.score, std::log(0.6), 1e-15);
    EXPECT_TRUE(vp.frame_nodes.empty());
}

TEST(EmissionTable, DimensionMismatchThrows) {
    Rng rng(1);
    const auto inst = toy::make_instance(rng);
    ObservationMatrix wrong(2, inst.models.feature_dim + 1);
    wrong.setZero();
    EXPECT_THROW(emission_table(inst.models, wrong), DimensionError);
    EXPECT_THROW(viterbi_decode(inst.models, inst.net, wrong), DimensionError);
}
