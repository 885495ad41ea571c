#include <gtest/gtest.h>

#include "vislip/decoder.hpp"
#include "vislip/labels.hpp"
#include "vislip/rng.hpp"

using namespace vislip;

namespace {

// One-dimensional models whose single mixture sits at a label-specific mean.
struct World {
    ModelSet models;
    std::map<std::string, double> mean{{"v18", 0.0}, {"v01", 10.0}, {"v02", 20.0}, {"v03", 30.0}};
    VisemeDict dict{{"AB", {{"v01", "v02"}}}, {"C", {{"v03"}}}, {"BA", {{"v02", "v01"}}}};

    World() {
        std::vector<ObservationMatrix> data{ObservationMatrix::Zero(4, 1)};
        data[0] << 0, 10, 20, 30;
        models = flat_start(std::vector<std::string>{"v18", "sp", "v01", "v02", "v03"}, 3, 1, data,
                            FlatStartOptions{false})
                     .models;
        for (auto& [label, m] : models.models)
            for (auto s : m.states) {
                auto& st = models.pool[s];
                st.means[0][0] = mean.count(label) ? mean.at(label) : 0.0;
                st.vars[0][0] = 1.0;
                st.refresh();
            }
        models = tie_silence_models(models, "v18", "sp");
    }

    ObservationMatrix frames(const std::vector<std::pair<std::string, int>>& plan) const {
        std::vector<double> v;
        for (const auto& [label, n] : plan)
            for (int i = 0; i < n; ++i) v.push_back(mean.at(label) + 0.1 * ((i % 3) - 1));
        ObservationMatrix m(static_cast<Eigen::Index>(v.size()), 1);
        for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
        return m;
    }
};

}  // namespace

TEST(ForceAlign, SegmentsTileTheUtterance) {
    World w;
    const auto x = w.frames({{"v18", 4}, {"v01", 5}, {"v02", 4}, {"v18", 3}, {"v03", 6}, {"v18", 5}});
    const std::vector<std::string> words{"AB", "C"};
    const auto r = force_align(w.models, x, words, w.dict);
    EXPECT_EQ(r.words, words);
    EXPECT_EQ(r.labels_without("sp"), (std::vector<std::string>{"v18", "v01", "v02", "v03", "v18"}));
    std::size_t next = 0;
    for (const auto& s : r.segments) {
        EXPECT_EQ(s.start, next);
        EXPECT_GT(s.end, s.start);
        EXPECT_EQ(s.states.size(), s.end - s.start);
        next = s.end;
    }
    EXPECT_EQ(next, static_cast<std::size_t>(x.rows()));
    // the pause between the words lands on the short-pause model
    bool pause = false;
    for (const auto& s : r.segments) pause |= s.label == "sp" && s.start == 13 && s.end == 16;
    EXPECT_TRUE(pause);
    const auto t = r.transcript();
    EXPECT_NO_THROW(t.validate());
    ASSERT_EQ(t.words.size(), 2u);
    EXPECT_EQ(t.words[0].word, "AB");
    EXPECT_EQ(t.words[0].count, 2u);
}

TEST(ForceAlign, TooFewFramesIsDecodeError) {
    World w;
    const auto x = w.frames({{"v01", 2}});
    EXPECT_THROW(force_align(w.models, x, std::vector<std::string>{"AB"}, w.dict), DecodeError);
    EXPECT_THROW(force_align(w.models, x, std::vector<std::string>{}, w.dict), Error);
    EXPECT_THROW(force_align(w.models, x, std::vector<std::string>{"ZZ"}, w.dict), OovError);
}

TEST(Decode, RecoversWordSequence) {
    World w;
    WordNetwork net;
    net.sil_label = "v18";
    net.sp_label = "sp";
    net.nodes = {"<s>", "AB", "BA", "C", "</s>"};
    net.expansions = w.dict;
    for (std::size_t f = 0; f < 4; ++f)
        for (std::size_t t = 1; t < 5; ++t)
            if (!(f == 0 && t == 4)) net.arcs.push_back({f, t, std::log(0.25)});
    const auto x = w.frames({{"v18", 4}, {"v02", 4}, {"v01", 4}, {"v03", 4}, {"v01", 3}, {"v02", 3}, {"v18", 4}});
    const auto r = viterbi_decode(w.models, net, x);
    EXPECT_EQ(r.words, (std::vector<std::string>{"BA", "C", "AB"}));
    EXPECT_TRUE(std::isfinite(r.score));
}

TEST(Decode, EmptyNetworkRejected) {
    World w;
    WordNetwork net;
    net.nodes = {"<s>", "</s>"};
    EXPECT_THROW(viterbi_decode(w.models, net, w.frames({{"v18", 3}})), Error);
}

TEST(Decode, InsertionPenaltyShiftsScore) {
    World w;
    const std::vector<std::string> words{"AB", "C"};
    const auto net = linear_network(words, w.dict);
    const auto x = w.frames({{"v18", 3}, {"v01", 3}, {"v02", 3}, {"v03", 3}, {"v18", 3}});
    const auto base = viterbi_decode(w.models, net, x);
    const auto pen = viterbi_decode(w.models, net, x, {1.0, -2.5});
    EXPECT_NEAR(pen.score, base.score - 5.0, 1e-9);
}

TEST(ExpandNetwork, SpWithoutTeeStillOptional) {
    World w;
    auto ms = w.models;
    auto& sp = ms.at("sp");
    sp.trans(0, 1) = 1.0;
    sp.trans(0, 2) = 0.0;
    const auto net = linear_network(std::vector<std::string>{"AB", "C"}, w.dict);
    const auto x = w.frames({{"v18", 3}, {"v01", 3}, {"v02", 3}, {"v03", 3}, {"v18", 3}});
    EXPECT_NO_THROW(viterbi_decode(ms, net, x));
}

TEST(Labels, RoundTripBlocks) {
    std::vector<LabelBlock> blocks(2);
    blocks[0].id = "u0001";
    blocks[0].transcript.units = {{"v18", 0, 4}, {"v01", 4, 9}};
    blocks[1].id = "u0002";
    blocks[1].transcript = Transcript::from_labels({"v02", "v03"});
    const auto text = save_labels(blocks);
    EXPECT_EQ(load_labels(text), blocks);
    EXPECT_EQ(save_labels(load_labels(text)), text);
    EXPECT_THROW(load_labels("1 2\n"), ParseError);
    EXPECT_THROW(load_labels("1 - x\n"), ParseError);
    EXPECT_THROW(load_labels("0 5 a\n3 6 b\n"), Error);
    EXPECT_TRUE(load_labels("").empty());
}
