#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace magdc {

// Ordered flat key=value text: one pair per line, '#' starts a comment, blank lines ignored.
class KeyValues {
public:
    void set(std::string key, std::string value);
    std::optional<std::string> get(std::string_view key) const;
    std::string get_or(std::string_view key, std::string fallback) const;
    bool contains(std::string_view key) const { return get(key).has_value(); }
    const std::vector<std::pair<std::string, std::string>>& items() const noexcept { return items_; }

    std::string to_text() const;
    // Throws std::invalid_argument naming the offending line.
    static KeyValues parse(std::string_view text);

    friend bool operator==(const KeyValues&, const KeyValues&) = default;

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace magdc
