#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "framelab/common.hpp"

namespace framelab {

// ---------------------------------------------------------------------------
// Label spaces
// ---------------------------------------------------------------------------

enum class Genre : int { satire = 0, reporting = 1, opinion = 2 };

inline const std::vector<std::string>& genre_class_names() {
    static const std::vector<std::string> names = {"satire", "reporting", "opinion"};
    return names;
}

inline constexpr int kNumFrames = 14;

inline const std::vector<std::string>& frame_class_names() {
    static const std::vector<std::string> names = {
        "Capacity and resources",
        "Crime and punishment",
        "Cultural identity",
        "Economic",
        "External regulation and reputation",
        "Fairness and equality",
        "Health and safety",
        "Legality constitutionality and jurisprudence",
        "Morality",
        "Policy prescription and evaluation",
        "Political",
        "Public opinion",
        "Quality of life",
        "Security and defense",
    };
    return names;
}

inline Genre parse_genre(const std::string& s) {
    const auto& names = genre_class_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return Genre(int(i));
    throw Error("unknown genre label: '" + s + "'");
}

inline const std::string& genre_name(Genre g) { return genre_class_names()[std::size_t(g)]; }

// Set of frames as a 14-bit mask. Bit i corresponds to frame_class_names()[i].
struct FrameSet {
    std::uint16_t bits = 0;

    bool has(int frame) const { return (bits >> frame) & 1u; }
    void add(int frame) { bits |= std::uint16_t(1u << frame); }
    int count() const {
        int n = 0;
        for (int i = 0; i < kNumFrames; ++i) n += has(i);
        return n;
    }
    bool empty() const { return bits == 0; }
    bool operator==(const FrameSet&) const = default;

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (int i = 0; i < kNumFrames; ++i)
            if (has(i)) out.push_back(frame_class_names()[std::size_t(i)]);
        return out;
    }

    static FrameSet from_names(const std::vector<std::string>& names) {
        FrameSet fs;
        const auto& all = frame_class_names();
        for (const auto& n : names) {
            auto it = std::find(all.begin(), all.end(), n);
            if (it == all.end()) throw Error("unknown frame label: '" + n + "'");
            fs.add(int(it - all.begin()));
        }
        return fs;
    }
};

enum class Task { genre, frames };

inline const char* task_name(Task t) { return t == Task::genre ? "genre" : "frames"; }

inline Task parse_task(const std::string& s) {
    if (s == "genre") return Task::genre;
    if (s == "frames") return Task::frames;
    throw Error("unknown task: '" + s + "' (expected genre or frames)");
}

// Declares a task as single-label or multi-label together with its class list.
struct TaskSpec {
    Task task;
    bool multi_label;
    std::vector<std::string> class_names;

    int num_classes() const { return int(class_names.size()); }
};

inline const TaskSpec& genre_task() {
    static const TaskSpec spec{Task::genre, false, genre_class_names()};
    return spec;
}

inline const TaskSpec& frames_task() {
    static const TaskSpec spec{Task::frames, true, frame_class_names()};
    return spec;
}

inline const TaskSpec& task_spec(Task t) { return t == Task::genre ? genre_task() : frames_task(); }

// ---------------------------------------------------------------------------
// Articles and datasets
// ---------------------------------------------------------------------------

enum class Source : int { official = 0, external = 1, collected = 2 };

inline const std::vector<std::string>& source_names() {
    static const std::vector<std::string> names = {"official", "external", "collected"};
    return names;
}

inline Source parse_source(const std::string& s) {
    const auto& names = source_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return Source(int(i));
    throw Error("unknown source tag: '" + s + "'");
}

inline const std::string& source_name(Source s) { return source_names()[std::size_t(s)]; }

constexpr const char* kTrainingLanguages[] = {"de", "en", "fr", "it", "pl", "ru"};

inline bool is_training_language(const std::string& lang) {
    for (const char* l : kTrainingLanguages)
        if (lang == l) return true;
    return false;
}

struct Article {
    std::string id;
    std::string language;  // ISO 639-1
    std::string text;      // title + body, newline-joined
    std::optional<Genre> genre;
    std::optional<FrameSet> frames;
    Source source = Source::official;

    bool has_label(Task t) const { return t == Task::genre ? genre.has_value() : frames.has_value(); }
};

struct Dataset {
    std::vector<Article> articles;

    std::size_t size() const { return articles.size(); }
    bool empty() const { return articles.empty(); }

    const Article* find(const std::string& id) const {
        for (const auto& a : articles)
            if (a.id == id) return &a;
        return nullptr;
    }
};

namespace detail {

inline void check_unique_ids(const Dataset& d, const char* context) {
    std::set<std::string> seen;
    for (const auto& a : d.articles)
        if (!seen.insert(a.id).second)
            throw Error(std::string(context) + ": duplicate article id '" + a.id + "'");
}

inline void validate_article(const Article& a) {
    if (a.id.empty()) throw Error("article with empty id");
    if (a.text.empty()) throw Error("article '" + a.id + "': text is empty");
    if (a.language.size() != 2 || !std::islower((unsigned char)a.language[0]) ||
        !std::islower((unsigned char)a.language[1]))
        throw Error("article '" + a.id + "': language must be a two-letter lowercase code, got '" +
                    a.language + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loading and saving. One JSON object per line: id, language, text, optional
// genre (string), optional frames (array of strings), optional source.
// ---------------------------------------------------------------------------

inline Article parse_article_record(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) throw Error("record is not an object");

    Article a;
    if (!j.contains("id") || !j["id"].is_string()) throw Error("record missing string field 'id'");
    a.id = j["id"].get<std::string>();
    auto fail = [&](const std::string& msg) { throw Error("article '" + a.id + "': " + msg); };

    if (!j.contains("language") || !j["language"].is_string()) fail("missing string field 'language'");
    a.language = j["language"].get<std::string>();
    if (!j.contains("text") || !j["text"].is_string()) fail("missing string field 'text'");
    a.text = j["text"].get<std::string>();

    if (j.contains("genre")) {
        if (!j["genre"].is_string()) fail("'genre' must be a string");
        try {
            a.genre = parse_genre(j["genre"].get<std::string>());
        } catch (const Error& e) {
            fail(e.what());
        }
    }
    if (j.contains("frames")) {
        if (!j["frames"].is_array()) fail("'frames' must be an array of strings");
        std::vector<std::string> names;
        for (const auto& f : j["frames"]) {
            if (!f.is_string()) fail("'frames' must be an array of strings");
            names.push_back(f.get<std::string>());
        }
        try {
            a.frames = FrameSet::from_names(names);
        } catch (const Error& e) {
            fail(e.what());
        }
    }
    if (j.contains("source")) {
        if (!j["source"].is_string()) fail("'source' must be a string");
        try {
            a.source = parse_source(j["source"].get<std::string>());
        } catch (const Error& e) {
            fail(e.what());
        }
    }
    detail::validate_article(a);
    return a;
}

// Loads a newline-delimited record file. Labels of both tasks are validated
// whenever present (records may carry both); `spec` names the task the
// dataset is loaded for and is recorded downstream, it does not relax
// validation. Unparseable labels are an error, never silently dropped.
inline Dataset load_dataset(const std::filesystem::path& path, const TaskSpec& spec) {
    (void)spec;
    if (!std::filesystem::exists(path)) throw Error("dataset file not found: " + path.string());
    std::string content = read_text_file(path);
    Dataset d;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string::npos) end = content.size();
        std::string line = content.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            d.articles.push_back(parse_article_record(line));
        } catch (const Error& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    detail::check_unique_ids(d, path.string().c_str());
    return d;
}

inline std::string serialize_article_record(const Article& a) {
    nlohmann::ordered_json j;
    j["id"] = a.id;
    j["language"] = a.language;
    j["text"] = a.text;
    if (a.genre) j["genre"] = genre_name(*a.genre);
    if (a.frames) j["frames"] = a.frames->names();
    j["source"] = source_name(a.source);
    return j.dump();
}

// Records are written sorted by id with a fixed field order so identical
// datasets serialize byte-identically.
inline void save_dataset(const std::filesystem::path& path, const Dataset& d) {
    std::vector<const Article*> order;
    order.reserve(d.articles.size());
    for (const auto& a : d.articles) order.push_back(&a);
    std::sort(order.begin(), order.end(),
              [](const Article* a, const Article* b) { return a->id < b->id; });
    std::string out;
    for (const Article* a : order) {
        out += serialize_article_record(*a);
        out += '\n';
    }
    write_text_file(path, out);
}

// ---------------------------------------------------------------------------
// Overlap statistics
// ---------------------------------------------------------------------------

struct OverlapReport {
    struct Row {
        std::string language;
        std::size_t n_a = 0;
        std::size_t n_b = 0;
        std::size_t n_shared = 0;
    };
    std::vector<Row> per_language;  // sorted by language code
    Row total{"all", 0, 0, 0};
};

inline OverlapReport dataset_stats(const Dataset& a, const Dataset& b) {
    std::map<std::string, OverlapReport::Row> rows;
    std::map<std::string, std::set<std::string>> ids_a;
    for (const auto& art : a.articles) {
        auto& row = rows[art.language];
        row.language = art.language;
        row.n_a++;
        ids_a[art.language].insert(art.id);
    }
    for (const auto& art : b.articles) {
        auto& row = rows[art.language];
        row.language = art.language;
        row.n_b++;
        if (ids_a[art.language].count(art.id)) row.n_shared++;
    }
    OverlapReport rep;
    for (auto& [lang, row] : rows) {
        rep.total.n_a += row.n_a;
        rep.total.n_b += row.n_b;
        rep.total.n_shared += row.n_shared;
        rep.per_language.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Balancing and composition
// ---------------------------------------------------------------------------

namespace detail {

// stable candidate order (by id) before the seeded shuffle, so selection
// depends only on (id set, seed)
inline std::vector<std::size_t> sorted_indices_by_id(const Dataset& d,
                                                     const std::vector<std::size_t>& subset) {
    std::vector<std::size_t> idx = subset;
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
        return d.articles[x].id < d.articles[y].id;
    });
    return idx;
}

}  // namespace detail

// Uniform without-replacement undersampling to `per_label` articles per genre
// label. Every article must carry a genre label.
inline Dataset undersample_balanced(const Dataset& d, std::size_t per_label, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_label(genre_class_names().size());
    for (std::size_t i = 0; i < d.articles.size(); ++i) {
        const auto& a = d.articles[i];
        if (!a.genre) throw Error("undersample_balanced: article '" + a.id + "' has no genre label");
        by_label[std::size_t(*a.genre)].push_back(i);
    }
    for (std::size_t l = 0; l < by_label.size(); ++l) {
        if (by_label[l].size() < per_label)
            throw Error("undersample_balanced: label '" + genre_class_names()[l] + "' has only " +
                        std::to_string(by_label[l].size()) + " articles, need " +
                        std::to_string(per_label));
    }
    Rng rng(seed);
    Dataset out;
    for (std::size_t l = 0; l < by_label.size(); ++l) {
        auto idx = detail::sorted_indices_by_id(d, by_label[l]);
        rng.shuffle(idx);
        idx.resize(per_label);
        for (std::size_t i : idx) out.articles.push_back(d.articles[i]);
    }
    std::sort(out.articles.begin(), out.articles.end(),
              [](const Article& a, const Article& b) { return a.id < b.id; });
    return out;
}

// Requested article count per (genre label, source) cell.
struct DatasetComposition {
    std::map<std::pair<Genre, Source>, std::size_t> counts;
    std::uint64_t seed = 0;

    void request(Genre g, Source s, std::size_t n) { counts[{g, s}] = n; }
};

// Draws the requested number of articles per (label, source) cell from the
// pooled sources, uniformly without replacement.
inline Dataset compose_dataset(const std::vector<Dataset>& sources, const DatasetComposition& comp) {
    Dataset pool;
    for (const auto& src : sources)
        for (const auto& a : src.articles) pool.articles.push_back(a);
    detail::check_unique_ids(pool, "compose_dataset");

    std::map<std::pair<Genre, Source>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < pool.articles.size(); ++i) {
        const auto& a = pool.articles[i];
        if (!a.genre) continue;  // composition is keyed on genre labels
        cells[{*a.genre, a.source}].push_back(i);
    }

    Rng rng(comp.seed);
    Dataset out;
    for (const auto& [key, requested] : comp.counts) {
        if (requested == 0) continue;
        auto it = cells.find(key);
        std::size_t available = it == cells.end() ? 0 : it->second.size();
        if (available < requested)
            throw Error("compose_dataset: requested " + std::to_string(requested) + " articles for (" +
                        genre_class_names()[std::size_t(key.first)] + ", " +
                        source_name(key.second) + "), only " + std::to_string(available) +
                        " available");
        auto idx = detail::sorted_indices_by_id(pool, it->second);
        rng.shuffle(idx);
        idx.resize(requested);
        for (std::size_t i : idx) out.articles.push_back(pool.articles[i]);
    }
    std::sort(out.articles.begin(), out.articles.end(),
              [](const Article& a, const Article& b) { return a.id < b.id; });
    detail::check_unique_ids(out, "compose_dataset");
    return out;
}

// Union of datasets keyed by article id. Shared ids must agree on language
// and text; their labels are merged (used to join the two tasks' files for
// multi-task training and to concatenate languages).
inline Dataset merge_datasets(const std::vector<const Dataset*>& parts) {
    std::map<std::string, Article> merged;
    std::vector<std::string> order;
    for (const Dataset* part : parts) {
        for (const auto& a : part->articles) {
            auto it = merged.find(a.id);
            if (it == merged.end()) {
                merged.emplace(a.id, a);
                order.push_back(a.id);
                continue;
            }
            Article& m = it->second;
            if (m.language != a.language || m.text != a.text)
                throw Error("merge_datasets: id '" + a.id + "' appears with conflicting content");
            if (a.genre) {
                if (m.genre && *m.genre != *a.genre)
                    throw Error("merge_datasets: id '" + a.id + "' has conflicting genre labels");
                m.genre = a.genre;
            }
            if (a.frames) {
                if (m.frames && !(*m.frames == *a.frames))
                    throw Error("merge_datasets: id '" + a.id + "' has conflicting frame labels");
                m.frames = a.frames;
            }
        }
    }
    Dataset out;
    for (const auto& id : order) out.articles.push_back(merged.at(id));
    return out;
}

// ---------------------------------------------------------------------------
// Prediction output files: tab separated, sorted by id, LF line endings.
// ---------------------------------------------------------------------------

inline std::string format_genre_predictions(const std::vector<std::pair<std::string, Genre>>& preds) {
    auto rows = preds;
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (const auto& [id, g] : rows) {
        out += id;
        out += '\t';
        out += genre_name(g);
        out += '\n';
    }
    return out;
}

inline std::string format_frame_predictions(const std::vector<std::pair<std::string, FrameSet>>& preds) {
    auto rows = preds;
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (const auto& [id, fs] : rows) {
        out += id;
        out += '\t';
        auto names = fs.names();
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) out += ',';
            out += names[i];
        }
        out += '\n';
    }
    return out;
}

}  // namespace framelab
