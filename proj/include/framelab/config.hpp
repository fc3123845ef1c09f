#pragma once

#include <map>
#include <string>
#include <vector>

#include "framelab/common.hpp"

namespace framelab {

// Hierarchical key-value configuration: `[section.subsection]` headers and
// `key = value` lines. Keys are normalized to lowercase with whitespace runs
// replaced by underscores, so the hyperparameter names can be written as
// they appear in the search-space tables ("Max steps") or as identifiers
// ("max_steps").
class KvConfig {
public:
    static std::string normalize_key(std::string_view raw) {
        std::string out;
        bool pending_sep = false;
        for (char c : raw) {
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!out.empty()) pending_sep = true;
                continue;
            }
            if (pending_sep) {
                out += '_';
                pending_sep = false;
            }
            out += char(std::tolower(static_cast<unsigned char>(c)));
        }
        return out;
    }

    static KvConfig parse(const std::string& text, const std::string& origin = "<config>") {
        KvConfig cfg;
        std::string section;
        std::size_t line_no = 0;
        for (const auto& raw_line : split(text, '\n')) {
            ++line_no;
            std::string line = trim(raw_line);
            if (line.empty() || line[0] == '#' || line[0] == ';') continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw Error(origin + ":" + std::to_string(line_no) + ": unterminated section header");
                section = normalize_key(line.substr(1, line.size() - 2));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw Error(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
            std::string key = normalize_key(line.substr(0, eq));
            if (key.empty())
                throw Error(origin + ":" + std::to_string(line_no) + ": empty key");
            std::string full = section.empty() ? key : section + "." + key;
            cfg.values_[full] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static KvConfig load(const std::filesystem::path& path) {
        return parse(read_text_file(path), path.string());
    }

    bool has(const std::string& key) const { return values_.count(normalize_key(key)) > 0; }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(normalize_key(key));
        if (it == values_.end()) throw Error("missing config key: " + key);
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(normalize_key(key));
        return it == values_.end() ? fallback : it->second;
    }

    // comma-separated list value
    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& part : split(get(key), ',')) {
            std::string v = trim(part);
            if (!v.empty()) out.push_back(v);
        }
        return out;
    }

    // keys under `prefix.`, with the prefix stripped; sorted (std::map order)
    std::vector<std::pair<std::string, std::string>> section(const std::string& prefix) const {
        std::string p = normalize_key(prefix) + ".";
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [k, v] : values_)
            if (k.rfind(p, 0) == 0) out.emplace_back(k.substr(p.size()), v);
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace framelab
