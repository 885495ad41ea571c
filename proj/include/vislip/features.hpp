#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vislip/linear_model.hpp"
#include "vislip/text_io.hpp"

namespace vislip {

/// One utterance of feature frames (rows) at a frame rate in Hz.
struct FeatureFrames {
    ObservationMatrix frames;
    double rate = 60.0;

    Eigen::Index size() const { return frames.rows(); }
    Eigen::Index dim() const { return frames.cols(); }
};

/// `#dim N rate R` header, then one space-separated frame per line.
inline FeatureFrames load_features(std::string_view contents) {
    const auto ls = text::lines(contents);
    if (ls.empty()) throw ParseError("feature file has no header", 1);
    auto head = text::split_ws(ls[0]);
    if (head.size() != 4 || head[0] != "#dim" || head[2] != "rate")
        throw ParseError("feature header must read '#dim N rate R'", 1);
    FeatureFrames f;
    const auto dim = text::parse_int(head[1], 1);
    if (dim < 1) throw ParseError("feature dimension must be positive", 1);
    f.rate = text::parse_double(head[3], 1);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        auto toks = text::split_ws(ls[i]);
        if (toks.empty()) continue;
        if (static_cast<long long>(toks.size()) != dim)
            throw DimensionError("line " + std::to_string(i + 1) + ": frame has " + std::to_string(toks.size()) +
                                 " values, header declares " + std::to_string(dim));
        std::vector<double> row;
        row.reserve(toks.size());
        for (const auto& t : toks) row.push_back(text::parse_double(t, i + 1));
        rows.push_back(std::move(row));
    }
    f.frames.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (long long c = 0; c < dim; ++c) f.frames(static_cast<Eigen::Index>(r), c) = rows[r][c];
    return f;
}

inline std::string save_features(const FeatureFrames& f) {
    std::string out = "#dim " + std::to_string(f.dim()) + " rate " + text::format_double(f.rate) + "\n";
    for (Eigen::Index r = 0; r < f.frames.rows(); ++r) {
        for (Eigen::Index c = 0; c < f.frames.cols(); ++c) {
            if (c) out += ' ';
            out += text::format_g17(f.frames(r, c));
        }
        out += '\n';
    }
    return out;
}

}  // namespace vislip
