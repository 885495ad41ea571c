#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/text_io.hpp"
#include "vislip/viseme_map.hpp"

namespace vislip {

/// A label file holds one block per utterance: an optional `# id` line, then
/// `start end label` per unit (frames, end exclusive; `- -` when untimed).
/// Blocks are separated by blank lines.
struct LabelBlock {
    std::string id;
    Transcript transcript;

    bool operator==(const LabelBlock&) const = default;
};

inline std::string save_labels(const std::vector<LabelBlock>& blocks) {
    std::string out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (b) out += "\n";
        out += "# " + (blocks[b].id.empty() ? std::to_string(b) : blocks[b].id) + "\n";
        for (const auto& u : blocks[b].transcript.units) {
            if (u.start) out += std::to_string(*u.start) + " " + std::to_string(*u.end);
            else out += "- -";
            out += " " + u.label + "\n";
        }
    }
    return out;
}

inline std::vector<LabelBlock> load_labels(std::string_view contents) {
    std::vector<LabelBlock> blocks;
    bool open = false;
    std::size_t n = 0;
    for (const auto& raw : text::lines(contents)) {
        ++n;
        const auto l = text::trim(raw);
        if (l.empty()) {
            open = false;
            continue;
        }
        if (!open) {
            blocks.emplace_back();
            open = true;
        }
        if (l.front() == '#') {
            blocks.back().id = std::string(text::trim(l.substr(1)));
            continue;
        }
        auto toks = text::split_ws(l);
        if (toks.size() != 3) throw ParseError("label lines read 'start end label'", n);
        TranscriptUnit u{toks[2], std::nullopt, std::nullopt};
        if (toks[0] != "-" || toks[1] != "-") {
            if (toks[0] == "-" || toks[1] == "-") throw ParseError("unit has only one of start/end", n);
            u.start = static_cast<std::size_t>(text::parse_int(toks[0], n));
            u.end = static_cast<std::size_t>(text::parse_int(toks[1], n));
        }
        blocks.back().transcript.units.push_back(std::move(u));
    }
    for (const auto& b : blocks) b.transcript.validate();
    return blocks;
}

}  // namespace vislip
