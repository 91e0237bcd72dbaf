#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tsprompt {

/// Domain error: invalid input data, violated invariants, backend failures.
/// The CLI maps these to exit code 1; usage errors are handled separately.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string trim(std::string_view s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return std::string();
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char delim) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

template <typename Range, typename Fn>
std::string join_map(const Range& items, std::string_view sep, Fn&& to_str) {
    std::string out;
    bool first = true;
    for (const auto& item : items) {
        if (!first) out.append(sep);
        out.append(to_str(item));
        first = false;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& items, std::string_view sep) {
    return join_map(items, sep, [](const std::string& s) { return s; });
}

inline size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return 0;
    size_t n = 0;
    size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

/// SplitMix64 mixer; used wherever independent seeds are derived from a base seed.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace tsprompt
