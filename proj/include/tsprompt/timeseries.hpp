#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsprompt/common.hpp"
#include "tsprompt/price.hpp"

namespace tsprompt {

/// Intraday clock time on a 5-minute grid, e.g. "14:35".
struct ClockTime {
    int hour = 0;
    int minute = 0;

    int minutes_of_day() const { return hour * 60 + minute; }

    std::string label() const {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%02d:%02d", hour, minute);
        return buf;
    }

    static ClockTime parse(std::string_view text) {
        std::string s = trim(text);
        if (s.size() != 5 || s[2] != ':' || !std::isdigit((unsigned char)s[0]) ||
            !std::isdigit((unsigned char)s[1]) || !std::isdigit((unsigned char)s[3]) ||
            !std::isdigit((unsigned char)s[4])) {
            throw Error("invalid time (expected HH:MM): \"" + s + "\"");
        }
        ClockTime t{(s[0] - '0') * 10 + (s[1] - '0'), (s[3] - '0') * 10 + (s[4] - '0')};
        if (t.hour > 23 || t.minute > 59) throw Error("invalid time: \"" + s + "\"");
        return t;
    }

    friend bool operator==(ClockTime a, ClockTime b) {
        return a.minutes_of_day() == b.minutes_of_day();
    }
    friend bool operator<(ClockTime a, ClockTime b) {
        return a.minutes_of_day() < b.minutes_of_day();
    }
    friend bool operator<=(ClockTime a, ClockTime b) {
        return a.minutes_of_day() <= b.minutes_of_day();
    }
};

/// Trading sessions: 09:00-11:30 and 12:30-15:00, both ends inclusive.
inline bool in_trading_session(ClockTime t) {
    int m = t.minutes_of_day();
    return (m >= 9 * 60 && m <= 11 * 60 + 30) || (m >= 12 * 60 + 30 && m <= 15 * 60);
}

/// All valid 5-minute session times, ascending. 31 per session, 62 total.
inline std::vector<ClockTime> all_session_times() {
    std::vector<ClockTime> out;
    for (int m = 0; m < 24 * 60; m += 5) {
        ClockTime t{m / 60, m % 60};
        if (in_trading_session(t)) out.push_back(t);
    }
    return out;
}

/// Daily close offset; days_ago ranges over 1..7.
struct DayOffset {
    int days_ago = 0;

    std::string label() const {
        return std::to_string(days_ago) + (days_ago == 1 ? "DayAgo" : "DaysAgo");
    }

    friend bool operator==(DayOffset a, DayOffset b) { return a.days_ago == b.days_ago; }
};

using Timestamp = std::variant<ClockTime, DayOffset>;

inline std::string timestamp_label(const Timestamp& ts) {
    if (const auto* t = std::get_if<ClockTime>(&ts)) return t->label();
    return std::get<DayOffset>(ts).label();
}

struct PricePoint {
    Timestamp when;
    Price price;

    friend bool operator==(const PricePoint& a, const PricePoint& b) {
        return a.when == b.when && a.price == b.price;
    }
};

enum class SeriesKind { short_term, long_term };

inline constexpr size_t kMaxShortTermPoints = 62;
inline constexpr size_t kLongTermPoints = 7;

/**
 * @brief Aligned price series in canonical order.
 *
 * Short-term series hold 5-minute session prices, most recent first.
 * Long-term series hold daily closes ordered 7DaysAgo down to 1DayAgo.
 * Prices are strictly positive; timestamps are strictly ordered.
 */
class PriceSeries {
public:
    PriceSeries() = default;

    /// Validates invariants; with resort=true the points are first sorted
    /// into canonical order, otherwise the given order must already be
    /// canonical.
    static PriceSeries create(SeriesKind kind, std::string index_name,
                              std::vector<PricePoint> points, bool resort = false) {
        if (index_name.empty() || index_name.find('\n') != std::string::npos) {
            throw Error("index name must be non-empty and single-line");
        }
        for (const auto& p : points) {
            if (kind == SeriesKind::short_term) {
                const auto* t = std::get_if<ClockTime>(&p.when);
                if (!t) throw Error("short-term series requires clock-time stamps");
                if (t->minute % 5 != 0) {
                    throw Error("time not on 5-minute grid: " + t->label());
                }
                if (!in_trading_session(*t)) {
                    throw Error("time outside trading sessions: " + t->label());
                }
            } else {
                const auto* d = std::get_if<DayOffset>(&p.when);
                if (!d) throw Error("long-term series requires day-offset stamps");
                if (d->days_ago < 1 || d->days_ago > 7) {
                    throw Error("day offset out of range 1..7: " +
                                std::to_string(d->days_ago));
                }
            }
            if (!p.price.positive()) {
                throw Error("non-positive price: " + p.price.str());
            }
        }
        if (kind == SeriesKind::short_term && points.size() > kMaxShortTermPoints) {
            throw Error("short-term series exceeds 62 points (" +
                        std::to_string(points.size()) + ")");
        }
        if (kind == SeriesKind::long_term && points.size() > kLongTermPoints) {
            throw Error("long-term series exceeds 7 points");
        }
        if (resort) {
            std::stable_sort(points.begin(), points.end(),
                             [kind](const PricePoint& a, const PricePoint& b) {
                                 return order_key(kind, a.when) < order_key(kind, b.when);
                             });
        }
        for (size_t i = 1; i < points.size(); ++i) {
            int64_t prev = order_key(kind, points[i - 1].when);
            int64_t cur = order_key(kind, points[i].when);
            if (prev == cur) {
                throw Error("duplicate timestamp: " + timestamp_label(points[i].when));
            }
            if (prev > cur) {
                throw Error("series not in canonical order at " +
                            timestamp_label(points[i].when));
            }
        }
        PriceSeries s;
        s.kind_ = kind;
        s.index_name_ = std::move(index_name);
        s.points_ = std::move(points);
        return s;
    }

    SeriesKind kind() const { return kind_; }
    const std::string& index_name() const { return index_name_; }
    const std::vector<PricePoint>& points() const { return points_; }
    size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

    friend bool operator==(const PriceSeries& a, const PriceSeries& b) {
        return a.kind_ == b.kind_ && a.index_name_ == b.index_name_ &&
               a.points_ == b.points_;
    }

private:
    // Canonical order: short-term descending by time, long-term descending
    // by days_ago (i.e. 7DaysAgo first).
    static int64_t order_key(SeriesKind kind, const Timestamp& ts) {
        if (kind == SeriesKind::short_term) {
            return -std::get<ClockTime>(ts).minutes_of_day();
        }
        return -std::get<DayOffset>(ts).days_ago;
    }

    SeriesKind kind_ = SeriesKind::short_term;
    std::string index_name_ = "Nikkei225";
    std::vector<PricePoint> points_;
};

/// Restricts a short-term series to points at or before `target`, preserving
/// order. The result is empty only when the input is.
inline PriceSeries window_until(const PriceSeries& series, ClockTime target) {
    if (series.kind() != SeriesKind::short_term) {
        throw Error("window_until requires a short-term series");
    }
    std::vector<PricePoint> kept;
    for (const auto& p : series.points()) {
        if (std::get<ClockTime>(p.when) <= target) kept.push_back(p);
    }
    return PriceSeries::create(SeriesKind::short_term, series.index_name(),
                               std::move(kept));
}

// ---------------------------------------------------------------------------
// CSV persistence: header "timestamp,price"; short-term rows use HH:MM,
// long-term rows use the integer days-ago.

inline PriceSeries load_price_csv(std::istream& in, SeriesKind kind,
                                  std::string index_name = "Nikkei225") {
    std::string line;
    if (!std::getline(in, line)) throw Error("empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "timestamp,price") {
        throw Error("line 1: expected header \"timestamp,price\", got \"" + line + "\"");
    }
    struct Row {
        size_t line_no;
        std::string ts;
        Price price;
    };
    std::vector<Row> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 2) {
            throw Error("line " + std::to_string(line_no) + ": expected 2 fields, got " +
                        std::to_string(fields.size()));
        }
        Price p;
        try {
            p = Price::parse(fields[1]);
        } catch (const Error& e) {
            throw Error("line " + std::to_string(line_no) + ": " + e.what());
        }
        rows.push_back({line_no, trim(fields[0]), p});
    }
    if (rows.empty()) throw Error("no data rows");
    if (kind == SeriesKind::short_term && rows.size() > kMaxShortTermPoints) {
        throw Error("short-term series exceeds 62 points (" +
                    std::to_string(rows.size()) + ")");
    }
    if (kind == SeriesKind::long_term && rows.size() != kLongTermPoints) {
        throw Error("long-term series must have exactly 7 points, got " +
                    std::to_string(rows.size()));
    }
    std::vector<PricePoint> points;
    std::set<int64_t> seen;
    for (const auto& r : rows) {
        try {
            Timestamp ts;
            int64_t key;
            if (kind == SeriesKind::short_term) {
                ClockTime t = ClockTime::parse(r.ts);
                if (t.minute % 5 != 0) {
                    throw Error("time not on 5-minute grid: " + t.label());
                }
                if (!in_trading_session(t)) {
                    throw Error("time outside trading sessions: " + t.label());
                }
                ts = t;
                key = t.minutes_of_day();
            } else {
                size_t idx = 0;
                int days = 0;
                try {
                    days = std::stoi(r.ts, &idx);
                } catch (const std::exception&) {
                    throw Error("invalid day offset: \"" + r.ts + "\"");
                }
                if (idx != r.ts.size()) throw Error("invalid day offset: \"" + r.ts + "\"");
                if (days < 1 || days > 7) {
                    throw Error("day offset out of range 1..7: " + std::to_string(days));
                }
                ts = DayOffset{days};
                key = days;
            }
            if (!r.price.positive()) throw Error("non-positive price: " + r.price.str());
            if (!seen.insert(key).second) {
                throw Error("duplicate timestamp: " + timestamp_label(ts));
            }
            points.push_back({ts, r.price});
        } catch (const Error& e) {
            throw Error("line " + std::to_string(r.line_no) + ": " + e.what());
        }
    }
    return PriceSeries::create(kind, std::move(index_name), std::move(points), true);
}

inline PriceSeries load_price_csv_file(const std::string& path, SeriesKind kind,
                                       std::string index_name = "Nikkei225") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    try {
        return load_price_csv(in, kind, std::move(index_name));
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

inline void save_price_csv(const PriceSeries& series, std::ostream& out) {
    out << "timestamp,price\n";
    for (const auto& p : series.points()) {
        if (series.kind() == SeriesKind::short_term) {
            out << std::get<ClockTime>(p.when).label();
        } else {
            out << std::get<DayOffset>(p.when).days_ago;
        }
        out << ',' << p.price.str() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Task instances and the dataset JSONL format.

enum class Split { train, valid, test };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    throw Error("bad split");
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "valid") return Split::valid;
    if (s == "test") return Split::test;
    throw Error("invalid split: \"" + std::string(s) + "\"");
}

/// One comment-generation task: the series pair visible at target_time plus
/// the human reference comment.
struct TaskInstance {
    std::string id;
    ClockTime target_time;
    PriceSeries short_term;
    PriceSeries long_term;
    std::string reference_comment;
    Split split = Split::train;
};

/// Invariant checks shared by the JSONL loader and the fixture generator.
inline void validate_instance(const TaskInstance& t) {
    if (t.id.empty()) throw Error("empty instance id");
    if (t.short_term.kind() != SeriesKind::short_term ||
        t.long_term.kind() != SeriesKind::long_term) {
        throw Error("instance " + t.id + ": series kinds swapped");
    }
    if (t.short_term.empty()) throw Error("instance " + t.id + ": empty short_term");
    if (t.long_term.size() != kLongTermPoints) {
        throw Error("instance " + t.id + ": long_term must have exactly 7 points");
    }
    for (const auto& p : t.short_term.points()) {
        if (!(std::get<ClockTime>(p.when) <= t.target_time)) {
            throw Error("instance " + t.id + ": short_term point " +
                        timestamp_label(p.when) + " is later than target_time");
        }
    }
    if (t.reference_comment.empty()) {
        throw Error("instance " + t.id + ": empty reference_comment");
    }
}

namespace detail {

inline Price price_from_json(const nlohmann::json& v) {
    if (v.is_string()) return Price::parse(v.get<std::string>());
    if (v.is_number()) return Price::from_double(v.get<double>());
    throw Error("price must be a number or string");
}

inline TaskInstance instance_from_json(const nlohmann::json& j,
                                       const std::string& index_name) {
    if (!j.is_object()) throw Error("record is not an object");
    for (const char* key :
         {"id", "target_time", "short_term", "long_term", "reference_comment", "split"}) {
        if (!j.contains(key)) throw Error(std::string("missing field \"") + key + "\"");
    }
    TaskInstance t;
    t.id = j.at("id").get<std::string>();
    t.target_time = ClockTime::parse(j.at("target_time").get<std::string>());
    auto read_points = [&](const nlohmann::json& arr, bool short_kind) {
        if (!arr.is_array()) throw Error("series field is not an array");
        std::vector<PricePoint> pts;
        for (const auto& el : arr) {
            if (!el.is_array() || el.size() != 2) {
                throw Error("series point must be a [timestamp, price] pair");
            }
            Timestamp ts;
            if (short_kind) {
                ts = ClockTime::parse(el.at(0).get<std::string>());
            } else {
                if (!el.at(0).is_number_integer()) {
                    throw Error("long-term timestamp must be an integer days-ago");
                }
                ts = DayOffset{el.at(0).get<int>()};
            }
            pts.push_back({ts, price_from_json(el.at(1))});
        }
        return pts;
    };
    t.short_term = PriceSeries::create(SeriesKind::short_term, index_name,
                                       read_points(j.at("short_term"), true), true);
    t.long_term = PriceSeries::create(SeriesKind::long_term, index_name,
                                      read_points(j.at("long_term"), false), true);
    t.reference_comment = j.at("reference_comment").get<std::string>();
    t.split = parse_split(j.at("split").get<std::string>());
    validate_instance(t);
    return t;
}

}  // namespace detail

inline std::vector<TaskInstance> load_dataset_jsonl(std::istream& in,
                                                    const std::string& index_name =
                                                        "Nikkei225") {
    std::vector<TaskInstance> out;
    std::set<std::string> ids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            TaskInstance t = detail::instance_from_json(j, index_name);
            if (!ids.insert(t.id).second) throw Error("duplicate id \"" + t.id + "\"");
            out.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw Error("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (out.empty()) throw Error("dataset has no records");
    return out;
}

inline std::vector<TaskInstance> load_dataset_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    try {
        return load_dataset_jsonl(in);
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

inline nlohmann::json instance_to_json(const TaskInstance& t) {
    nlohmann::json j;
    j["id"] = t.id;
    j["target_time"] = t.target_time.label();
    nlohmann::json st = nlohmann::json::array();
    for (const auto& p : t.short_term.points()) {
        st.push_back({std::get<ClockTime>(p.when).label(), p.price.str()});
    }
    j["short_term"] = st;
    nlohmann::json lt = nlohmann::json::array();
    for (const auto& p : t.long_term.points()) {
        lt.push_back({std::get<DayOffset>(p.when).days_ago, p.price.str()});
    }
    j["long_term"] = lt;
    j["reference_comment"] = t.reference_comment;
    j["split"] = split_name(t.split);
    return j;
}

inline void save_dataset_jsonl(const std::vector<TaskInstance>& instances,
                               std::ostream& out) {
    for (const auto& t : instances) out << instance_to_json(t).dump() << '\n';
}

inline std::vector<const TaskInstance*> filter_split(
    const std::vector<TaskInstance>& all, Split split) {
    std::vector<const TaskInstance*> out;
    for (const auto& t : all) {
        if (t.split == split) out.push_back(&t);
    }
    return out;
}

inline const TaskInstance& find_instance(const std::vector<TaskInstance>& all,
                                         const std::string& id) {
    for (const auto& t : all) {
        if (t.id == id) return t;
    }
    throw Error("no instance with id \"" + id + "\"");
}

}  // namespace tsprompt
