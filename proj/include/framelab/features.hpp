#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "framelab/common.hpp"
#include "framelab/corpus.hpp"

namespace framelab {

// ---------------------------------------------------------------------------
// UTF-8 + case folding helpers. The fold covers ASCII, Latin-1, Latin
// Extended-A and Cyrillic, which is what the six training languages need;
// anything else passes through unchanged.
// ---------------------------------------------------------------------------

namespace text {

inline std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = s[i];
        char32_t cp = 0;
        int len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
            cp = char32_t(c & 0x1f) << 6 | (s[i + 1] & 0x3f);
            len = 2;
        } else if ((c >> 4) == 0xe && i + 2 < s.size()) {
            cp = char32_t(c & 0x0f) << 12 | char32_t(s[i + 1] & 0x3f) << 6 | (s[i + 2] & 0x3f);
            len = 3;
        } else if ((c >> 3) == 0x1e && i + 3 < s.size()) {
            cp = char32_t(c & 0x07) << 18 | char32_t(s[i + 1] & 0x3f) << 12 |
                 char32_t(s[i + 2] & 0x3f) << 6 | (s[i + 3] & 0x3f);
            len = 4;
        } else {
            cp = 0xFFFD;  // stray byte
        }
        out.push_back(cp);
        i += std::size_t(len);
    }
    return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out += char(cp);
    } else if (cp < 0x800) {
        out += char(0xc0 | (cp >> 6));
        out += char(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        out += char(0xe0 | (cp >> 12));
        out += char(0x80 | ((cp >> 6) & 0x3f));
        out += char(0x80 | (cp & 0x3f));
    } else {
        out += char(0xf0 | (cp >> 18));
        out += char(0x80 | ((cp >> 12) & 0x3f));
        out += char(0x80 | ((cp >> 6) & 0x3f));
        out += char(0x80 | (cp & 0x3f));
    }
}

inline char32_t fold_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 0x20;  // Latin-1
    if (cp == 0x0130) return 'i';                                        // dotted I
    if (cp >= 0x0100 && cp <= 0x0137 && cp % 2 == 0) return cp + 1;     // Latin Ext-A
    if (cp >= 0x0139 && cp <= 0x0147 && cp % 2 == 1) return cp + 1;
    if (cp >= 0x014A && cp <= 0x0177 && cp % 2 == 0) return cp + 1;
    if (cp == 0x0178) return 0x00FF;
    if (cp >= 0x0179 && cp <= 0x017D && cp % 2 == 1) return cp + 1;
    if (cp >= 0x0410 && cp <= 0x042F) return cp + 0x20;  // Cyrillic
    if (cp >= 0x0400 && cp <= 0x040F) return cp + 0x50;
    return cp;
}

inline bool is_space(char32_t cp) {
    switch (cp) {
        case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
        case 0x00A0: case 0x2028: case 0x2029: case 0x202F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline bool is_word_char(char32_t cp) {
    if (cp < 0x80)
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    if (is_space(cp)) return false;
    if (cp >= 0x00A1 && cp <= 0x00BF) return false;  // Latin-1 punctuation/signs
    if (cp == 0x00D7 || cp == 0x00F7) return false;
    if (cp >= 0x2010 && cp <= 0x205E) return false;  // general punctuation
    if (cp >= 0x2E00 && cp <= 0x2E7F) return false;
    return true;
}

}  // namespace text

// Word segmentation: split on whitespace and punctuation boundaries,
// punctuation kept as single-codepoint tokens, everything lowercased,
// truncated to the first `max_tokens` tokens.
inline std::vector<std::string> tokenize(std::string_view input, std::size_t max_tokens) {
    std::vector<std::string> tokens;
    if (max_tokens == 0) return tokens;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (char32_t raw : text::decode_utf8(input)) {
        if (tokens.size() >= max_tokens) return tokens;
        char32_t cp = text::fold_lower(raw);
        if (text::is_space(cp)) {
            flush();
        } else if (text::is_word_char(cp)) {
            text::append_utf8(current, cp);
        } else {
            flush();
            if (tokens.size() >= max_tokens) return tokens;
            std::string punct;
            text::append_utf8(punct, cp);
            tokens.push_back(punct);
        }
    }
    flush();
    if (tokens.size() > max_tokens) tokens.resize(max_tokens);
    return tokens;
}

// ---------------------------------------------------------------------------
// Hashed n-gram features
// ---------------------------------------------------------------------------

enum class Weighting { binary, tf, tf_log };

inline const char* weighting_name(Weighting w) {
    switch (w) {
        case Weighting::binary: return "binary";
        case Weighting::tf: return "tf";
        default: return "tf_log";
    }
}

inline Weighting parse_weighting(const std::string& s) {
    if (s == "binary") return Weighting::binary;
    if (s == "tf") return Weighting::tf;
    if (s == "tf_log") return Weighting::tf_log;
    throw Error("unknown weighting: '" + s + "'");
}

struct NgramRange {
    int min_n = 1;
    int max_n = 1;
    bool operator==(const NgramRange&) const = default;
};

struct FeatureConfig {
    int hash_dim = 4096;  // power of two
    NgramRange word_ngrams{1, 2};
    NgramRange char_ngrams{3, 5};
    int max_tokens = 512;
    Weighting weighting = Weighting::tf_log;

    bool operator==(const FeatureConfig&) const = default;

    void validate() const {
        if (hash_dim < 2 || (hash_dim & (hash_dim - 1)) != 0)
            throw Error("FeatureConfig: hash_dim must be a power of two >= 2");
        if (max_tokens < 1) throw Error("FeatureConfig: max_tokens must be >= 1");
        for (const auto& r : {word_ngrams, char_ngrams})
            if (r.min_n < 1 || r.max_n < r.min_n)
                throw Error("FeatureConfig: n-gram order range is empty");
    }
};

// Sparse vector over [0, hash_dim); entries sorted by index, no stored zeros.
struct FeatureVector {
    std::vector<std::pair<std::uint32_t, double>> entries;

    std::size_t l0() const { return entries.size(); }
    bool operator==(const FeatureVector&) const = default;
};

// n-grams are keyed with a type/order prefix and hashed with FNV-1a 64; the
// index is the low bits (hash_dim is a power of two). Weighting is applied
// per hashed index, after collisions.
inline FeatureVector featurize_text(std::string_view raw_text, const FeatureConfig& cfg) {
    cfg.validate();
    const std::vector<std::string> tokens = tokenize(raw_text, std::size_t(cfg.max_tokens));
    const std::uint64_t mask = std::uint64_t(cfg.hash_dim) - 1;

    std::unordered_map<std::uint32_t, std::uint32_t> counts;
    std::string key;

    for (int n = cfg.word_ngrams.min_n; n <= cfg.word_ngrams.max_n; ++n) {
        if (std::size_t(n) > tokens.size()) break;
        for (std::size_t i = 0; i + std::size_t(n) <= tokens.size(); ++i) {
            key.clear();
            key += 'w';
            key += char('0' + n);
            key += ':';
            for (int k = 0; k < n; ++k) {
                if (k) key += '\x1f';
                key += tokens[i + std::size_t(k)];
            }
            counts[std::uint32_t(fnv1a64(key) & mask)]++;
        }
    }

    // char n-grams over the normalized token stream (tokens joined by single
    // spaces), so truncation applies identically to both n-gram kinds
    std::string joined;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) joined += ' ';
        joined += tokens[i];
    }
    std::vector<std::size_t> cp_offsets;  // byte offset of each code point
    for (std::size_t i = 0; i < joined.size();) {
        cp_offsets.push_back(i);
        unsigned char c = joined[i];
        if (c < 0x80) i += 1;
        else if ((c >> 5) == 0x6) i += 2;
        else if ((c >> 4) == 0xe) i += 3;
        else if ((c >> 3) == 0x1e) i += 4;
        else i += 1;
    }
    cp_offsets.push_back(joined.size());
    const std::size_t n_cp = cp_offsets.size() - 1;
    for (int n = cfg.char_ngrams.min_n; n <= cfg.char_ngrams.max_n; ++n) {
        if (std::size_t(n) > n_cp) break;
        for (std::size_t i = 0; i + std::size_t(n) <= n_cp; ++i) {
            key.clear();
            key += 'c';
            key += char('0' + n);
            key += ':';
            key.append(joined, cp_offsets[i], cp_offsets[i + std::size_t(n)] - cp_offsets[i]);
            counts[std::uint32_t(fnv1a64(key) & mask)]++;
        }
    }

    FeatureVector out;
    out.entries.reserve(counts.size());
    for (const auto& [idx, count] : counts) {
        double w = 1.0;
        switch (cfg.weighting) {
            case Weighting::binary: w = 1.0; break;
            case Weighting::tf: w = double(count); break;
            case Weighting::tf_log: w = 1.0 + std::log(double(count)); break;
        }
        out.entries.emplace_back(idx, w);
    }
    std::sort(out.entries.begin(), out.entries.end());
    return out;
}

inline FeatureVector featurize(const Article& article, const FeatureConfig& cfg) {
    return featurize_text(article.text, cfg);
}

}  // namespace framelab
