#pragma once

// `key = value` configuration files. Keys may be dotted (`ransac.seed = 7`)
// or grouped under `[section]` headers; `#` and `;` start comments.

#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "curves/core/csv.hpp"
#include "curves/core/error.hpp"

namespace curves {

class KeyValueFile {
public:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    static KeyValueFile parse(std::istream& in, std::string source = "<config>") {
        KeyValueFile file;
        file.source_ = std::move(source);
        std::string line;
        std::string section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view text = line;
            if (const auto c = text.find_first_of("#;"); c != std::string_view::npos) text = text.substr(0, c);
            text = csv::trim(text);
            if (text.empty()) continue;
            if (text.front() == '[') {
                if (text.back() != ']') file.fail(line_no, "unterminated section header");
                section = std::string(csv::trim(text.substr(1, text.size() - 2)));
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string_view::npos) file.fail(line_no, "expected 'key = value'");
            const auto key = csv::trim(text.substr(0, eq));
            if (key.empty()) file.fail(line_no, "empty key");
            const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
            if (file.entries_.contains(full)) file.fail(line_no, "duplicate key '" + full + "'");
            file.entries_[full] = {std::string(csv::trim(text.substr(eq + 1))), line_no};
        }
        return file;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
        return parse(in, path);
    }

    bool contains(const std::string& key) const { return entries_.contains(key); }

    const Entry* find(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    std::optional<std::string> get_string(const std::string& key) const {
        const auto* e = find(key);
        if (!e) return std::nullopt;
        return e->value;
    }

    std::optional<double> get_double(const std::string& key) const {
        const auto* e = find(key);
        if (!e) return std::nullopt;
        const auto v = csv::parse_double(e->value);
        if (!v) fail(e->line, "'" + key + "' is not a number");
        return v;
    }

    std::optional<long long> get_int(const std::string& key) const {
        const auto* e = find(key);
        if (!e) return std::nullopt;
        const auto v = csv::parse_double(e->value);
        if (!v || *v != static_cast<double>(static_cast<long long>(*v))) {
            fail(e->line, "'" + key + "' is not an integer");
        }
        return static_cast<long long>(*v);
    }

    /// Comma-separated list; empty items are dropped.
    std::optional<std::vector<std::string>> get_list(const std::string& key) const {
        const auto* e = find(key);
        if (!e) return std::nullopt;
        std::vector<std::string> out;
        std::string_view rest = e->value;
        while (true) {
            const auto comma = rest.find(',');
            const auto item = csv::trim(rest.substr(0, comma));
            if (!item.empty()) out.emplace_back(item);
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        return out;
    }

    /// Throws ConfigError naming the first key not in `known`.
    void check_known(const std::set<std::string>& known) const {
        for (const auto& [key, entry] : entries_) {
            if (!known.contains(key)) fail(entry.line, "unknown key '" + key + "'");
        }
    }

    std::string located(std::size_t line, const std::string& message) const {
        return source_ + ":" + std::to_string(line) + ": " + message;
    }

    [[noreturn]] void fail(std::size_t line, const std::string& message,
                           ErrorCode code = ErrorCode::ConfigError) const {
        throw Error(code, located(line, message));
    }

    void set(const std::string& key, std::string value) { entries_[key] = {std::move(value), 0}; }

private:
    std::string source_;
    std::map<std::string, Entry> entries_;
};

} // namespace curves
