#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "tsprompt/common.hpp"
#include "tsprompt/price.hpp"
#include "tsprompt/timeseries.hpp"
#include "tsprompt/utf8.hpp"

namespace tsprompt {

enum class Direction { up, down, flat };
enum class Continuation { rebound, continuation, unspecified };

inline std::string direction_name(Direction d) {
    switch (d) {
        case Direction::up: return "Up";
        case Direction::down: return "Down";
        case Direction::flat: return "Flat";
    }
    throw Error("bad direction");
}

inline std::string continuation_name(Continuation c) {
    switch (c) {
        case Continuation::rebound: return "Rebound";
        case Continuation::continuation: return "Continuation";
        case Continuation::unspecified: return "Unspecified";
    }
    throw Error("bad continuation");
}

/// Gold price movement at target time: sign and size of the move versus the
/// previous daily close, and whether it continues or reverses the prior
/// day-over-day step.
struct MovementLabel {
    Direction direction = Direction::flat;
    Continuation continuation = Continuation::unspecified;
    int64_t magnitude_hundredths = 0;

    std::string magnitude_str() const {
        std::string s = Price::render_hundredths(magnitude_hundredths);
        return magnitude_hundredths > 0 ? "+" + s : s;
    }
};

struct LexiconEntry {
    std::string term;
    Direction direction = Direction::up;
    Continuation continuation = Continuation::unspecified;
};

/// Movement-term lexicon; extraction is longest-match so 続伸 wins over a
/// standalone 伸 entry.
class MovementLexicon {
public:
    static MovementLexicon defaults() {
        MovementLexicon lex;
        lex.add({"続伸", Direction::up, Continuation::continuation});
        lex.add({"反発", Direction::up, Continuation::rebound});
        lex.add({"続落", Direction::down, Continuation::continuation});
        lex.add({"反落", Direction::down, Continuation::rebound});
        lex.add({"高", Direction::up, Continuation::unspecified});
        lex.add({"安", Direction::down, Continuation::unspecified});
        return lex;
    }

    /// Parses UTF-8 lines `term<TAB>direction<TAB>continuation`, directions
    /// up/down, continuations rebound/continuation/unspecified. `#` lines
    /// are comments.
    static MovementLexicon load(std::istream& in) {
        MovementLexicon lex;
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty() || line[0] == '#') continue;
            auto fields = split(line, '\t');
            if (fields.size() != 3) {
                throw Error("line " + std::to_string(line_no) +
                            ": expected term<TAB>direction<TAB>continuation");
            }
            try {
                lex.add({trim(fields[0]), parse_direction(trim(fields[1])),
                         parse_continuation(trim(fields[2]))});
            } catch (const Error& e) {
                throw Error("line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (lex.entries_.empty()) throw Error("lexicon has no entries");
        return lex;
    }

    static MovementLexicon load_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open lexicon " + path);
        try {
            return load(in);
        } catch (const Error& e) {
            throw Error(path + ": " + e.what());
        }
    }

    void add(LexiconEntry entry) {
        if (entry.term.empty()) throw Error("empty lexicon term");
        for (const auto& e : entries_) {
            if (e.term == entry.term) throw Error("duplicate lexicon term " + e.term);
        }
        entries_.push_back(std::move(entry));
    }

    const std::vector<LexiconEntry>& entries() const { return entries_; }

private:
    static Direction parse_direction(std::string_view s) {
        if (s == "up" || s == "Up") return Direction::up;
        if (s == "down" || s == "Down") return Direction::down;
        throw Error("invalid direction \"" + std::string(s) + "\"");
    }

    static Continuation parse_continuation(std::string_view s) {
        if (s == "rebound" || s == "Rebound") return Continuation::rebound;
        if (s == "continuation" || s == "Continuation") return Continuation::continuation;
        if (s == "unspecified" || s == "Unspecified") return Continuation::unspecified;
        throw Error("invalid continuation \"" + std::string(s) + "\"");
    }

    std::vector<LexiconEntry> entries_;
};

/**
 * @brief Derives the gold movement from the series themselves.
 *
 * Direction and magnitude compare the short-term price at target_time with
 * the 1DayAgo close; continuation compares against the prior daily step
 * (1DayAgo minus 2DaysAgo). This is an automated approximation of a human
 * judgment, not a reading of the reference comment.
 */
inline MovementLabel derive_gold_label(const TaskInstance& t,
                                       int64_t flat_threshold_hundredths = 0) {
    PriceSeries windowed = window_until(t.short_term, t.target_time);
    if (windowed.empty()) {
        throw Error("no short-term points at or before target_time");
    }
    Price current = windowed.points().front().price;
    const Price* close_1d = nullptr;
    const Price* close_2d = nullptr;
    for (const auto& p : t.long_term.points()) {
        int days = std::get<DayOffset>(p.when).days_ago;
        if (days == 1) close_1d = &p.price;
        if (days == 2) close_2d = &p.price;
    }
    if (!close_1d || !close_2d) {
        throw Error("long-term series must include 1DayAgo and 2DaysAgo closes");
    }
    MovementLabel label;
    label.magnitude_hundredths = current - *close_1d;
    int64_t mag = label.magnitude_hundredths;
    if (mag > flat_threshold_hundredths) {
        label.direction = Direction::up;
    } else if (mag < -flat_threshold_hundredths) {
        label.direction = Direction::down;
    } else {
        label.direction = Direction::flat;
        return label;
    }
    int64_t prior = *close_1d - *close_2d;
    if (prior == 0) {
        label.continuation = Continuation::unspecified;
    } else if ((prior > 0) == (mag > 0)) {
        label.continuation = Continuation::continuation;
    } else {
        label.continuation = Continuation::rebound;
    }
    return label;
}

/// All lexicon hits in reading order; at each position the longest matching
/// term wins and the scan resumes after it.
inline std::vector<LexiconEntry> extract_movement_terms(std::string_view comment,
                                                        const MovementLexicon& lexicon) {
    std::vector<LexiconEntry> hits;
    size_t pos = 0;
    while (pos < comment.size()) {
        const LexiconEntry* best = nullptr;
        for (const auto& e : lexicon.entries()) {
            if (comment.substr(pos, e.term.size()) != e.term) continue;
            if (!best || e.term.size() > best->term.size()) best = &e;
        }
        if (best) {
            hits.push_back(*best);
            pos += best->term.size();
        } else {
            size_t len;
            utf8_decode_at(comment, pos, len);
            pos += len;
        }
    }
    return hits;
}

enum class Judgment { consistent, inconsistent, no_claim };

inline std::string judgment_name(Judgment j) {
    switch (j) {
        case Judgment::consistent: return "Consistent";
        case Judgment::inconsistent: return "Inconsistent";
        case Judgment::no_claim: return "NoClaim";
    }
    throw Error("bad judgment");
}

/// NoClaim without extracted terms; Inconsistent when any term contradicts
/// the gold direction, or claims the opposite continuation while the gold
/// one is defined; Consistent otherwise.
inline Judgment judge(std::string_view comment, const MovementLabel& gold,
                      const MovementLexicon& lexicon) {
    auto hits = extract_movement_terms(comment, lexicon);
    if (hits.empty()) return Judgment::no_claim;
    for (const auto& hit : hits) {
        if (hit.direction != gold.direction) return Judgment::inconsistent;
        if (hit.continuation != Continuation::unspecified &&
            gold.direction != Direction::flat &&
            gold.continuation != Continuation::unspecified &&
            hit.continuation != gold.continuation) {
            return Judgment::inconsistent;
        }
    }
    return Judgment::consistent;
}

struct MagnitudeClaim {
    int64_t claimed_hundredths = 0;
    Direction direction = Direction::up;
    bool matches = false;
};

/// Optional numeric check: every `N円高` / `N円安` figure (ASCII or
/// full-width digits) is compared against |gold magnitude| with a tolerance,
/// default one yen.
inline std::vector<MagnitudeClaim> check_magnitude_claims(
    std::string_view comment, const MovementLabel& gold,
    int64_t tolerance_hundredths = 100) {
    std::vector<MagnitudeClaim> claims;
    size_t pos = 0;
    auto digit_at = [&](size_t p, int& value, size_t& len) {
        if (p >= comment.size()) return false;
        unsigned char c = comment[p];
        if (c >= '0' && c <= '9') {
            value = c - '0';
            len = 1;
            return true;
        }
        size_t l;
        char32_t cp = utf8_decode_at(comment, p, l);
        if (cp >= 0xFF10 && cp <= 0xFF19) {  // full-width 0-9
            value = static_cast<int>(cp - 0xFF10);
            len = l;
            return true;
        }
        return false;
    };
    while (pos < comment.size()) {
        int digit;
        size_t dlen;
        if (!digit_at(pos, digit, dlen)) {
            size_t len;
            utf8_decode_at(comment, pos, len);
            pos += len;
            continue;
        }
        int64_t value = 0;
        size_t end = pos;
        while (digit_at(end, digit, dlen) && value < (1ll << 40)) {
            value = value * 10 + digit;
            end += dlen;
        }
        std::string_view rest = comment.substr(end);
        Direction dir;
        if (rest.rfind("円高", 0) == 0) {
            dir = Direction::up;
        } else if (rest.rfind("円安", 0) == 0) {
            dir = Direction::down;
        } else {
            pos = end;
            continue;
        }
        MagnitudeClaim claim;
        claim.claimed_hundredths = value * 100;
        claim.direction = dir;
        int64_t gold_mag = gold.magnitude_hundredths < 0 ? -gold.magnitude_hundredths
                                                         : gold.magnitude_hundredths;
        claim.matches = dir == gold.direction &&
                        std::abs(claim.claimed_hundredths - gold_mag) <=
                            tolerance_hundredths;
        claims.push_back(claim);
        pos = end + std::string_view("円高").size();
    }
    return claims;
}

}  // namespace tsprompt
