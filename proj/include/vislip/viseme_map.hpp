#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vislip/error.hpp"
#include "vislip/text_io.hpp"

namespace vislip {

inline constexpr std::string_view kSilencePhone = "sil";
inline constexpr std::string_view kShortPausePhone = "sp";
inline constexpr std::string_view kGarbageId = "garb";

/// Lowercases a phone symbol and strips stress digits ("AH0" -> "ah").
inline std::string normalize_phone(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        if (std::isdigit(static_cast<unsigned char>(c))) continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

/// The closed set of phone symbols a map or dictionary may use.
class Inventory {
public:
    Inventory() = default;
    explicit Inventory(std::vector<std::string> symbols) {
        for (auto& s : symbols) {
            auto n = normalize_phone(s);
            if (n.empty()) throw ParseError("empty phoneme symbol in inventory");
            symbols_.insert(std::move(n));
        }
    }

    /// Every phone of the standard visual mapping plus silence and short pause.
    static Inventory standard() {
        return Inventory({"p",  "b",  "m",  "f",  "v",  "th", "dh", "t",  "d",  "n",  "k",  "g",
                          "h",  "j",  "ng", "y",  "s",  "z",  "l",  "r",  "sh", "zh", "ch", "jh",
                          "w",  "i",  "ih", "eh", "ae", "ey", "ay", "aa", "ao", "ah", "uh", "er",
                          "ax", "u",  "uw", "oy", "iy", "hh", "aw", "ow", "sil", "sp"});
    }

    /// Whitespace-separated symbols; `#` starts a comment.
    static Inventory load(std::string_view text) {
        std::vector<std::string> symbols;
        for (const auto& raw : text::lines(text)) {
            std::string_view l = raw;
            if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
            for (auto& tok : text::split_ws(l)) symbols.push_back(std::move(tok));
        }
        return Inventory(std::move(symbols));
    }

    bool contains(std::string_view p) const { return symbols_.count(std::string(p)) != 0; }
    const std::set<std::string>& symbols() const { return symbols_; }
    std::size_t size() const { return symbols_.size(); }

private:
    std::set<std::string> symbols_;
};

struct VisemeClass {
    std::string id;
    std::vector<std::string> phonemes;

    bool operator==(const VisemeClass&) const = default;
};

/// Partition of a phoneme inventory into viseme classes. Immutable once built;
/// the constructor rejects anything that is not a partition.
class VisemeMap {
public:
    VisemeMap() = default;

    VisemeMap(std::vector<VisemeClass> classes, Inventory inventory)
        : classes_(std::move(classes)), inventory_(std::move(inventory)) {
        std::set<std::string> ids;
        for (std::size_t c = 0; c < classes_.size(); ++c) {
            const auto& cls = classes_[c];
            if (cls.id.empty()) throw PartitionError("viseme class with empty id");
            if (!ids.insert(cls.id).second) throw PartitionError("duplicate viseme id '" + cls.id + "'");
            if (cls.phonemes.empty()) throw PartitionError("viseme class '" + cls.id + "' is empty");
            for (const auto& p : cls.phonemes) {
                if (!inventory_.contains(p)) throw InventoryError(p);
                auto [it, fresh] = index_.emplace(p, c);
                if (!fresh)
                    throw PartitionError("phoneme '" + p + "' appears in both '" +
                                         classes_[it->second].id + "' and '" + cls.id + "'");
            }
        }
        for (const auto& p : inventory_.symbols())
            if (!index_.count(p)) throw PartitionError("phoneme '" + p + "' is not in any viseme class");
    }

    /// Builds a map whose inventory is exactly the phones it lists.
    static VisemeMap from_classes(std::vector<VisemeClass> classes) {
        std::vector<std::string> all;
        for (const auto& c : classes) all.insert(all.end(), c.phonemes.begin(), c.phonemes.end());
        return VisemeMap(std::move(classes), Inventory(std::move(all)));
    }

    const std::vector<VisemeClass>& classes() const { return classes_; }
    const Inventory& inventory() const { return inventory_; }
    std::size_t size() const { return classes_.size(); }

    const std::string& map_phoneme(std::string_view p) const {
        auto it = index_.find(std::string(p));
        if (it == index_.end()) throw PartitionError("phoneme '" + std::string(p) + "' maps to no viseme class");
        return classes_[it->second].id;
    }

    std::optional<std::size_t> index_of(std::string_view id) const {
        for (std::size_t c = 0; c < classes_.size(); ++c)
            if (classes_[c].id == id) return c;
        return std::nullopt;
    }

    bool has_class(std::string_view id) const { return index_of(id).has_value(); }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& c : classes_) out.push_back(c.id);
        return out;
    }

    /// Id of the class holding the silence phone, or empty.
    std::string silence_id() const { return id_holding(kSilencePhone); }
    std::string short_pause_id() const { return id_holding(kShortPausePhone); }

    /// Silence and short pause are never merged into the garbage class.
    bool is_exempt(std::string_view id) const {
        return id == kGarbageId || (!silence_id().empty() && id == silence_id()) ||
               (!short_pause_id().empty() && id == short_pause_id());
    }

    bool operator==(const VisemeMap& o) const { return classes_ == o.classes_; }

private:
    std::string id_holding(std::string_view phone) const {
        auto it = index_.find(std::string(phone));
        return it == index_.end() ? std::string() : classes_[it->second].id;
    }

    std::vector<VisemeClass> classes_;
    Inventory inventory_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Parses `vID ph1 ph2 ...` lines (`#` comments). Without an inventory the
/// map's own phones define it.
inline VisemeMap load_viseme_map(std::string_view text, const Inventory* inventory = nullptr) {
    std::vector<VisemeClass> classes;
    std::size_t n = 0;
    for (const auto& raw : text::lines(text)) {
        ++n;
        std::string_view l = raw;
        if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
        auto toks = text::split_ws(l);
        if (toks.empty()) continue;
        if (toks.size() < 2) throw ParseError("viseme class '" + toks[0] + "' lists no phonemes", n);
        VisemeClass cls{toks[0], {}};
        for (std::size_t i = 1; i < toks.size(); ++i) cls.phonemes.push_back(normalize_phone(toks[i]));
        classes.push_back(std::move(cls));
    }
    if (inventory) return VisemeMap(std::move(classes), *inventory);
    return VisemeMap::from_classes(std::move(classes));
}

/// Canonical form: one class per line, single spaces, no comments.
inline std::string save_viseme_map(const VisemeMap& map) {
    std::string out;
    for (const auto& c : map.classes()) {
        out += c.id;
        for (const auto& p : c.phonemes) out += " " + p;
        out += "\n";
    }
    return out;
}

/// Consonant/vowel map with 17 speech classes, v18 silence, and a short-pause class.
inline VisemeMap table2_map() {
    return VisemeMap(
        {
            {"v01", {"p", "b", "m"}},
            {"v02", {"f", "v"}},
            {"v03", {"th", "dh"}},
            {"v04", {"t", "d", "n", "k", "g", "h", "j", "ng", "y"}},
            {"v05", {"s", "z"}},
            {"v06", {"l"}},
            {"v07", {"r"}},
            {"v08", {"sh", "zh", "ch", "jh"}},
            {"v09", {"w"}},
            {"v10", {"i", "ih"}},
            {"v11", {"eh", "ae", "ey", "ay"}},
            {"v12", {"aa", "ao", "ah"}},
            {"v13", {"uh", "er", "ax"}},
            {"v14", {"u", "uw"}},
            {"v15", {"oy"}},
            {"v16", {"iy", "hh"}},
            {"v17", {"aw", "ow"}},
            {"v18", {"sil"}},
            {"sp", {"sp"}},
        },
        Inventory::standard());
}

/// The map above with the four under-represented classes pooled into `garb`.
inline VisemeMap table4_map() {
    return VisemeMap(
        {
            {"v01", {"p", "b", "m"}},
            {"v02", {"f", "v"}},
            {"v03", {"th", "dh"}},
            {"v04", {"t", "d", "n", "k", "g", "h", "j", "ng", "y"}},
            {"v05", {"s", "z"}},
            {"v06", {"l"}},
            {"v07", {"r"}},
            {"v10", {"i", "ih"}},
            {"v11", {"eh", "ae", "ey", "ay"}},
            {"v12", {"aa", "ao", "ah"}},
            {"v13", {"uh", "er", "ax"}},
            {"v16", {"iy", "hh"}},
            {"v17", {"aw", "ow"}},
            {"v18", {"sil"}},
            {"sp", {"sp"}},
            {"garb", {"u", "uw", "oy", "w", "sh", "zh", "ch", "jh"}},
        },
        Inventory::standard());
}

/// Word -> pronunciation variants, in file order.
class PronunciationDict {
public:
    using Pronunciation = std::vector<std::string>;

    void add(const std::string& word, Pronunciation pron) {
        if (pron.empty()) throw ParseError("empty pronunciation for '" + word + "'");
        entries_[text::to_upper(word)].push_back(std::move(pron));
    }

    bool contains(std::string_view word) const { return entries_.count(text::to_upper(std::string(word))) != 0; }

    const std::vector<Pronunciation>& variants(std::string_view word) const {
        auto it = entries_.find(text::to_upper(std::string(word)));
        if (it == entries_.end()) throw OovError(std::string(word));
        return it->second;
    }

    const Pronunciation& first(std::string_view word) const { return variants(word).front(); }

    const std::map<std::string, std::vector<Pronunciation>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::map<std::string, std::vector<Pronunciation>> entries_;
};

/// CMU-style `WORD  ph1 ph2 ...`. `WORD(2)` marks a variant; `;;;` and `#`
/// lines are comments. Words are uppercased, phones lowercased and stripped
/// of stress digits.
inline PronunciationDict load_dictionary(std::string_view text, const Inventory& inventory) {
    PronunciationDict dict;
    std::size_t n = 0;
    for (const auto& raw : text::lines(text)) {
        ++n;
        auto l = text::trim(raw);
        if (l.empty() || l.starts_with(";;;") || l.starts_with('#')) continue;
        auto toks = text::split_ws(l);
        if (toks.size() < 2) throw ParseError("pronunciation entry '" + toks[0] + "' has no phones", n);
        std::string word = toks[0];
        if (auto paren = word.find('('); paren != std::string::npos && word.back() == ')') word.resize(paren);
        if (word.empty()) throw ParseError("empty word", n);
        PronunciationDict::Pronunciation pron;
        for (std::size_t i = 1; i < toks.size(); ++i) {
            auto p = normalize_phone(toks[i]);
            if (!inventory.contains(p)) throw InventoryError(p);
            pron.push_back(std::move(p));
        }
        dict.add(word, std::move(pron));
    }
    return dict;
}

inline std::string save_dictionary(const PronunciationDict& dict) {
    std::string out;
    for (const auto& [word, variants] : dict.entries()) {
        for (std::size_t v = 0; v < variants.size(); ++v) {
            out += v == 0 ? word : word + "(" + std::to_string(v + 1) + ")";
            out += " ";
            for (const auto& p : variants[v]) out += " " + p;
            out += "\n";
        }
    }
    return out;
}

struct TranscriptUnit {
    std::string label;
    std::optional<std::size_t> start;
    std::optional<std::size_t> end;  // exclusive

    bool operator==(const TranscriptUnit&) const = default;
};

/// Word boundary annotation: units [first, first + count) spell `word`.
struct WordSpan {
    std::string word;
    std::size_t first = 0;
    std::size_t count = 0;

    bool operator==(const WordSpan&) const = default;
};

struct Transcript {
    std::vector<TranscriptUnit> units;
    std::vector<WordSpan> words;

    std::size_t size() const { return units.size(); }
    bool empty() const { return units.empty(); }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        out.reserve(units.size());
        for (const auto& u : units) out.push_back(u.label);
        return out;
    }

    static Transcript from_labels(const std::vector<std::string>& labels) {
        Transcript t;
        for (const auto& l : labels) t.units.push_back({l, std::nullopt, std::nullopt});
        return t;
    }

    /// Timed units must be ordered and non-overlapping with start <= end.
    void validate() const {
        std::optional<std::size_t> last_end;
        for (const auto& u : units) {
            if (u.start.has_value() != u.end.has_value())
                throw Error("unit '" + u.label + "' has only one of start/end");
            if (!u.start) continue;
            if (*u.start > *u.end) throw Error("unit '" + u.label + "' ends before it starts");
            if (last_end && *u.start < *last_end) throw Error("unit '" + u.label + "' overlaps its predecessor");
            last_end = u.end;
        }
    }

    bool operator==(const Transcript&) const = default;
};

/// Concatenates first-variant viseme strings; adjacent identical labels are kept.
inline Transcript words_to_visemes(const PronunciationDict& dict, const VisemeMap& map,
                                   std::span<const std::string> words) {
    Transcript t;
    for (const auto& w : words) {
        const auto& pron = dict.first(w);
        WordSpan span{text::to_upper(w), t.units.size(), pron.size()};
        for (const auto& p : pron) t.units.push_back({map.map_phoneme(p), std::nullopt, std::nullopt});
        t.words.push_back(std::move(span));
    }
    return t;
}

/// Word -> distinct viseme strings over all pronunciation variants.
using VisemeDict = std::map<std::string, std::vector<std::vector<std::string>>>;

inline VisemeDict make_viseme_dict(const PronunciationDict& dict, const VisemeMap& map) {
    VisemeDict out;
    for (const auto& [word, variants] : dict.entries()) {
        auto& dst = out[word];
        for (const auto& pron : variants) {
            std::vector<std::string> vis;
            for (const auto& p : pron) vis.push_back(map.map_phoneme(p));
            if (std::find(dst.begin(), dst.end(), vis) == dst.end()) dst.push_back(std::move(vis));
        }
    }
    return out;
}

using VisemeCounts = std::map<std::string, std::size_t>;

/// Occurrence count of every class of `map` (absent classes count 0).
inline VisemeCounts count_visemes(std::span<const Transcript> transcripts, const VisemeMap& map) {
    VisemeCounts counts;
    for (const auto& c : map.classes()) counts[c.id] = 0;
    for (const auto& t : transcripts)
        for (const auto& u : t.units) {
            auto it = counts.find(u.label);
            if (it == counts.end()) throw Error("label '" + u.label + "' is not a viseme of the map");
            ++it->second;
        }
    return counts;
}

/// Pools every non-exempt class counted below `threshold` into one garbage
/// class appended after the surviving classes. An existing garbage class
/// absorbs the newly merged phones, which makes the operation idempotent.
/// Throws when no class with at least `threshold` samples would remain to train.
inline VisemeMap apply_garbage_threshold(const VisemeMap& map, const VisemeCounts& counts, std::size_t threshold) {
    std::vector<VisemeClass> kept;
    VisemeClass garbage{std::string(kGarbageId), {}};
    std::size_t garbage_count = 0;
    bool garbage_seen = false;
    for (const auto& cls : map.classes()) {
        if (cls.id == kGarbageId) {
            garbage.phonemes.insert(garbage.phonemes.end(), cls.phonemes.begin(), cls.phonemes.end());
            if (auto it = counts.find(cls.id); it != counts.end()) garbage_count += it->second;
            garbage_seen = true;
            continue;
        }
        if (map.is_exempt(cls.id)) {
            kept.push_back(cls);
            continue;
        }
        auto it = counts.find(cls.id);
        if (it == counts.end()) throw Error("no count supplied for viseme '" + cls.id + "'");
        if (it->second < threshold) {
            garbage.phonemes.insert(garbage.phonemes.end(), cls.phonemes.begin(), cls.phonemes.end());
            garbage_count += it->second;
        } else {
            kept.push_back(cls);
        }
    }
    std::size_t trainable = 0;
    for (const auto& cls : kept)
        if (!map.is_exempt(cls.id)) ++trainable;
    if (!garbage.phonemes.empty()) {
        if (garbage_count >= threshold || garbage_seen) ++trainable;
        kept.push_back(std::move(garbage));
    }
    if (trainable == 0) throw Error("garbage merging leaves no trainable viseme class");
    return VisemeMap(std::move(kept), map.inventory());
}

}  // namespace vislip
