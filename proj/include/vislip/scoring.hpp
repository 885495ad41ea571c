#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/text_io.hpp"

namespace vislip {

/// Edit penalties; the defaults are the usual HResults values.
struct EditCosts {
    int substitution = 10;
    int deletion = 7;
    int insertion = 7;
};

enum class EditOp { kMatch, kSubstitution, kDeletion, kInsertion };

struct AlignmentStep {
    EditOp op;
    std::optional<std::size_t> ref;
    std::optional<std::size_t> hyp;
};

struct LabelAlignment {
    std::vector<std::string> ref;
    std::vector<std::string> hyp;
    std::vector<AlignmentStep> steps;
    long cost = 0;

    std::size_t count(EditOp op) const {
        return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [op](const auto& s) { return s.op == op; }));
    }
    std::size_t hits() const { return count(EditOp::kMatch); }
    std::size_t substitutions() const { return count(EditOp::kSubstitution); }
    std::size_t deletions() const { return count(EditOp::kDeletion); }
    std::size_t insertions() const { return count(EditOp::kInsertion); }
};

/// Minimum-cost alignment. On equal cost the traceback prefers a diagonal
/// step (match or substitution), then a deletion, then an insertion.
inline LabelAlignment align_labels(std::span<const std::string> ref, std::span<const std::string> hyp,
                                   const EditCosts& costs = {}) {
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<long> d((n + 1) * (m + 1), 0);
    auto at = [&](std::size_t i, std::size_t j) -> long& { return d[i * (m + 1) + j]; };
    for (std::size_t i = 1; i <= n; ++i) at(i, 0) = at(i - 1, 0) + costs.deletion;
    for (std::size_t j = 1; j <= m; ++j) at(0, j) = at(0, j - 1) + costs.insertion;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j) {
            const long diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : costs.substitution);
            const long del = at(i - 1, j) + costs.deletion;
            const long ins = at(i, j - 1) + costs.insertion;
            at(i, j) = std::min({diag, del, ins});
        }

    LabelAlignment a;
    a.ref.assign(ref.begin(), ref.end());
    a.hyp.assign(hyp.begin(), hyp.end());
    a.cost = at(n, m);
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0) {
            const bool same = ref[i - 1] == hyp[j - 1];
            if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : costs.substitution)) {
                a.steps.push_back({same ? EditOp::kMatch : EditOp::kSubstitution, i - 1, j - 1});
                --i;
                --j;
                continue;
            }
        }
        if (i > 0 && at(i, j) == at(i - 1, j) + costs.deletion) {
            a.steps.push_back({EditOp::kDeletion, i - 1, std::nullopt});
            --i;
            continue;
        }
        a.steps.push_back({EditOp::kInsertion, std::nullopt, j - 1});
        --j;
    }
    std::reverse(a.steps.begin(), a.steps.end());
    return a;
}

/// Pooled counts. N = H + D + S; accuracy may be negative.
struct ScoreReport {
    std::size_t N = 0, H = 0, D = 0, S = 0, I = 0;

    double correctness() const {
        if (N == 0) throw UndefinedError("score undefined for an empty reference");
        return 100.0 * static_cast<double>(H) / static_cast<double>(N);
    }
    double accuracy() const {
        if (N == 0) throw UndefinedError("score undefined for an empty reference");
        return 100.0 * (static_cast<double>(H) - static_cast<double>(I)) / static_cast<double>(N);
    }

    bool operator==(const ScoreReport&) const = default;
};

inline ScoreReport score(std::span<const LabelAlignment> alignments) {
    ScoreReport r;
    for (const auto& a : alignments) {
        r.H += a.hits();
        r.S += a.substitutions();
        r.D += a.deletions();
        r.I += a.insertions();
    }
    r.N = r.H + r.D + r.S;
    if (r.N == 0) throw UndefinedError("score undefined for an empty reference");
    return r;
}

/// One line in the HResults layout.
inline std::string format_score(const ScoreReport& r, std::string_view unit = "VISEME") {
    return std::string(unit) + ": %Corr=" + text::format_fixed(r.correctness(), 2) +
           ", Acc=" + text::format_fixed(r.accuracy(), 2) + " [H=" + std::to_string(r.H) +
           ", D=" + std::to_string(r.D) + ", S=" + std::to_string(r.S) + ", I=" + std::to_string(r.I) +
           ", N=" + std::to_string(r.N) + "]";
}

inline ScoreReport parse_score(std::string_view line) {
    ScoreReport r;
    auto grab = [&](std::string_view key) -> std::size_t {
        const auto pos = line.find(key);
        if (pos == std::string_view::npos) throw ParseError("score line lacks '" + std::string(key) + "'");
        auto rest = line.substr(pos + key.size());
        const auto stop = rest.find_first_of(",]");
        return static_cast<std::size_t>(text::parse_int(rest.substr(0, stop)));
    };
    r.H = grab("H=");
    r.D = grab("D=");
    r.S = grab("S=");
    r.I = grab("I=");
    r.N = grab("N=");
    if (r.N != r.H + r.D + r.S) throw ParseError("score line violates N = H + D + S");
    return r;
}

/// Reference x hypothesis counts from hits and substitutions, plus
/// deletion (per reference) and insertion (per hypothesis) margins.
struct ConfusionMatrix {
    std::vector<std::string> labels;
    Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> counts;
    Eigen::Matrix<long, Eigen::Dynamic, 1> deletions;
    Eigen::Matrix<long, Eigen::Dynamic, 1> insertions;

    explicit ConfusionMatrix(std::vector<std::string> l = {}) : labels(std::move(l)) {
        const auto n = static_cast<Eigen::Index>(labels.size());
        counts = decltype(counts)::Zero(n, n);
        deletions = decltype(deletions)::Zero(n);
        insertions = decltype(insertions)::Zero(n);
    }

    std::optional<Eigen::Index> index_of(std::string_view label) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return static_cast<Eigen::Index>(i);
        return std::nullopt;
    }

    Eigen::Index require(std::string_view label) const {
        auto i = index_of(label);
        if (!i) throw Error("label '" + std::string(label) + "' is not in the confusion class list");
        return *i;
    }

    long hits() const { return counts.trace(); }
    long substitutions() const { return counts.sum() - counts.trace(); }

    ScoreReport report() const {
        ScoreReport r;
        r.H = static_cast<std::size_t>(hits());
        r.S = static_cast<std::size_t>(substitutions());
        r.D = static_cast<std::size_t>(deletions.sum());
        r.I = static_cast<std::size_t>(insertions.sum());
        r.N = r.H + r.S + r.D;
        return r;
    }

    /// The same counts over `superset`, which must contain every label.
    ConfusionMatrix relabeled(const std::vector<std::string>& superset) const {
        ConfusionMatrix out(superset);
        std::vector<Eigen::Index> to;
        for (const auto& l : labels) to.push_back(out.require(l));
        const auto n = static_cast<Eigen::Index>(labels.size());
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) out.counts(to[r], to[c]) = counts(r, c);
            out.deletions(to[r]) = deletions(r);
            out.insertions(to[r]) = insertions(r);
        }
        return out;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (o.labels != labels) throw Error("cannot add confusion matrices over different class lists");
        counts += o.counts;
        deletions += o.deletions;
        insertions += o.insertions;
        return *this;
    }

    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const LabelAlignment> alignments, std::vector<std::string> labels) {
    ConfusionMatrix cm(std::move(labels));
    for (const auto& a : alignments)
        for (const auto& s : a.steps) {
            switch (s.op) {
                case EditOp::kMatch:
                case EditOp::kSubstitution:
                    ++cm.counts(cm.require(a.ref[*s.ref]), cm.require(a.hyp[*s.hyp]));
                    break;
                case EditOp::kDeletion:
                    ++cm.deletions(cm.require(a.ref[*s.ref]));
                    break;
                case EditOp::kInsertion:
                    ++cm.insertions(cm.require(a.hyp[*s.hyp]));
                    break;
            }
        }
    return cm;
}

/// Header row of hypothesis labels plus DEL; one row per reference label;
/// a closing INS row whose DEL cell is empty.
inline std::string save_confusion_csv(const ConfusionMatrix& cm) {
    std::string out = "ref\\hyp";
    for (const auto& l : cm.labels) out += "," + l;
    out += ",DEL\n";
    for (std::size_t r = 0; r < cm.labels.size(); ++r) {
        out += cm.labels[r];
        for (std::size_t c = 0; c < cm.labels.size(); ++c)
            out += "," + std::to_string(cm.counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        out += "," + std::to_string(cm.deletions(static_cast<Eigen::Index>(r))) + "\n";
    }
    out += "INS";
    for (std::size_t c = 0; c < cm.labels.size(); ++c)
        out += "," + std::to_string(cm.insertions(static_cast<Eigen::Index>(c)));
    out += ",\n";
    return out;
}

inline ConfusionMatrix load_confusion_csv(std::string_view contents) {
    auto ls = text::lines(contents);
    while (!ls.empty() && text::trim(ls.back()).empty()) ls.pop_back();
    if (ls.size() < 2) throw ParseError("confusion CSV needs a header and an INS row");
    auto head = text::split(ls[0], ',');
    if (head.size() < 2 || head.back() != "DEL") throw ParseError("confusion CSV header must end with DEL", 1);
    std::vector<std::string> labels(head.begin() + 1, head.end() - 1);
    const std::size_t n = labels.size();
    if (ls.size() != n + 2) throw ParseError("confusion CSV needs one row per label plus INS");
    ConfusionMatrix cm(labels);
    for (std::size_t r = 0; r < n; ++r) {
        auto cells = text::split(ls[r + 1], ',');
        if (cells.size() != n + 2 || cells[0] != labels[r]) throw ParseError("malformed confusion row", r + 2);
        for (std::size_t c = 0; c < n; ++c)
            cm.counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = text::parse_int(cells[c + 1], r + 2);
        cm.deletions(static_cast<Eigen::Index>(r)) = text::parse_int(cells[n + 1], r + 2);
    }
    auto ins = text::split(ls[n + 1], ',');
    if (ins.size() != n + 2 || ins[0] != "INS") throw ParseError("malformed INS row", n + 2);
    for (std::size_t c = 0; c < n; ++c) cm.insertions(static_cast<Eigen::Index>(c)) = text::parse_int(ins[c + 1], n + 2);
    return cm;
}

}  // namespace vislip
