#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "tsprompt/common.hpp"

namespace tsprompt {

/**
 * @brief Exact decimal price with two fraction digits, stored as integer
 *        hundredths.
 *
 * Prices round-trip byte-exactly through parse/render ("9988.05" stays
 * "9988.05"); binary floating point never enters the data model.
 */
class Price {
public:
    Price() = default;

    static Price from_hundredths(int64_t h) { return Price(h); }

    /// Parses "[-]digits.dd" with exactly two fraction digits.
    static Price parse(std::string_view text) {
        std::string s = trim(text);
        size_t i = 0;
        bool neg = false;
        if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
            neg = s[i] == '-';
            ++i;
        }
        size_t digits_start = i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        if (i == digits_start) throw Error("invalid price: \"" + s + "\"");
        if (i + 3 != s.size() || s[i] != '.' ||
            !std::isdigit(static_cast<unsigned char>(s[i + 1])) ||
            !std::isdigit(static_cast<unsigned char>(s[i + 2]))) {
            throw Error("invalid price (need exactly two decimal places): \"" + s + "\"");
        }
        int64_t whole = 0;
        for (size_t j = digits_start; j < i; ++j) {
            whole = whole * 10 + (s[j] - '0');
            if (whole > (1ll << 52)) throw Error("price out of range: \"" + s + "\"");
        }
        int64_t frac = (s[i + 1] - '0') * 10 + (s[i + 2] - '0');
        int64_t h = whole * 100 + frac;
        return Price(neg ? -h : h);
    }

    /// Accepts a JSON number; requires it to be an exact two-decimal value.
    static Price from_double(double v) {
        double scaled = v * 100.0;
        double rounded = std::nearbyint(scaled);
        if (std::abs(scaled - rounded) > 1e-6 || std::abs(rounded) > double(1ll << 53)) {
            throw Error("price has more than two decimal places: " + std::to_string(v));
        }
        return Price(static_cast<int64_t>(rounded));
    }

    int64_t hundredths() const { return hundredths_; }

    bool positive() const { return hundredths_ > 0; }

    std::string str() const { return render_hundredths(hundredths_); }

    /// Renders integer hundredths as a signed two-decimal string.
    static std::string render_hundredths(int64_t h) {
        char buf[40];
        int64_t a = h < 0 ? -h : h;
        std::snprintf(buf, sizeof(buf), "%s%lld.%02lld", h < 0 ? "-" : "",
                      static_cast<long long>(a / 100), static_cast<long long>(a % 100));
        return buf;
    }

    friend bool operator==(Price a, Price b) { return a.hundredths_ == b.hundredths_; }
    friend bool operator!=(Price a, Price b) { return a.hundredths_ != b.hundredths_; }
    friend bool operator<(Price a, Price b) { return a.hundredths_ < b.hundredths_; }

    /// Signed difference in hundredths of a yen.
    friend int64_t operator-(Price a, Price b) { return a.hundredths_ - b.hundredths_; }

private:
    explicit Price(int64_t h) : hundredths_(h) {}
    int64_t hundredths_ = 0;
};

}  // namespace tsprompt
