#include "magdc/keyvalue.hpp"

#include <stdexcept>

namespace magdc {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

void KeyValues::set(std::string key, std::string value) {
    for (auto& [k, v] : items_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    items_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> KeyValues::get(std::string_view key) const {
    for (const auto& [k, v] : items_)
        if (k == key)
            return v;
    return std::nullopt;
}

std::string KeyValues::get_or(std::string_view key, std::string fallback) const {
    auto v = get(key);
    return v ? *v : std::move(fallback);
}

std::string KeyValues::to_text() const {
    std::string out;
    for (const auto& [k, v] : items_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

KeyValues KeyValues::parse(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty())
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value, got '" +
                                        std::string(line) + "'");
        kv.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
    }
    return kv;
}

}  // namespace magdc
