#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsprompt/common.hpp"
#include "tsprompt/timeseries.hpp"

namespace tsprompt {

/// The ten prompt input formats.
enum class PromptFormat {
    direct,
    column,
    row,
    python_list,
    python_list_nested,
    python_dictionary,
    html_table,
    latex_table,
    text_english,
    text_japanese,
};

inline const std::vector<PromptFormat>& all_formats() {
    static const std::vector<PromptFormat> f = {
        PromptFormat::direct,          PromptFormat::column,
        PromptFormat::row,             PromptFormat::python_list,
        PromptFormat::python_list_nested, PromptFormat::python_dictionary,
        PromptFormat::html_table,      PromptFormat::latex_table,
        PromptFormat::text_english,    PromptFormat::text_japanese,
    };
    return f;
}

inline std::string format_name(PromptFormat f) {
    switch (f) {
        case PromptFormat::direct: return "direct";
        case PromptFormat::column: return "column";
        case PromptFormat::row: return "row";
        case PromptFormat::python_list: return "python-list";
        case PromptFormat::python_list_nested: return "python-list-nested";
        case PromptFormat::python_dictionary: return "python-dictionary";
        case PromptFormat::html_table: return "html-table";
        case PromptFormat::latex_table: return "latex-table";
        case PromptFormat::text_english: return "text-english";
        case PromptFormat::text_japanese: return "text-japanese";
    }
    throw Error("bad format");
}

/// Accepts the canonical kebab-case name; underscores are tolerated.
inline PromptFormat parse_format(std::string_view name) {
    std::string canon(name);
    for (char& c : canon) {
        if (c == '_') c = '-';
    }
    for (PromptFormat f : all_formats()) {
        if (format_name(f) == canon) return f;
    }
    throw Error("unknown format \"" + std::string(name) +
                "\" (expected one of: direct, column, row, python-list, "
                "python-list-nested, python-dictionary, html-table, latex-table, "
                "text-english, text-japanese)");
}

enum class TemplateLanguage { english, japanese };

/// Optional overrides for serializer headings and template text. Unset
/// fields fall back to per-format, per-kind defaults.
struct SerializerConfig {
    std::optional<std::string> heading_time;    // default "Time" short / "Date" long
    std::optional<std::string> heading_value;   // default: series index name
    std::optional<TemplateLanguage> language;   // Text formats only
    std::optional<std::string> currency_suffix; // default "yen" / "円" by language
};

namespace detail {

inline std::string heading_or(const std::optional<std::string>& opt,
                              std::string fallback) {
    if (!opt) return fallback;
    if (opt->empty() || opt->find('\n') != std::string::npos) {
        throw Error("heading must be non-empty and single-line");
    }
    return *opt;
}

struct ResolvedConfig {
    std::string time;
    std::string value;
    TemplateLanguage language;
    std::string suffix;
};

inline ResolvedConfig resolve_config(const PriceSeries& s, PromptFormat format,
                                     const SerializerConfig& cfg) {
    bool is_short = s.kind() == SeriesKind::short_term;
    std::string time_default =
        format == PromptFormat::latex_table ? "Timestamp" : (is_short ? "Time" : "Date");
    TemplateLanguage lang = cfg.language.value_or(format == PromptFormat::text_japanese
                                                      ? TemplateLanguage::japanese
                                                      : TemplateLanguage::english);
    std::string suffix = cfg.currency_suffix.value_or(
        lang == TemplateLanguage::japanese ? "円" : "yen");
    return {heading_or(cfg.heading_time, time_default),
            heading_or(cfg.heading_value, s.index_name()), lang, suffix};
}

inline std::string day_phrase_english(int days_ago) {
    if (days_ago == 1) return "yesterday";
    return std::to_string(days_ago) + " days ago";
}

}  // namespace detail

/**
 * @brief Renders a series into one of the ten prompt formats.
 *
 * Output is deterministic, has no trailing whitespace, and uses LF for all
 * line breaks. Long-term series substitute day labels ("7DaysAgo") for
 * clock times.
 */
inline std::string serialize(const PriceSeries& s, PromptFormat format,
                             const SerializerConfig& cfg = {}) {
    if (s.empty()) throw Error("cannot serialize empty series");
    auto rc = detail::resolve_config(s, format, cfg);
    const auto& pts = s.points();
    bool is_short = s.kind() == SeriesKind::short_term;
    auto label = [](const PricePoint& p) { return timestamp_label(p.when); };
    auto price = [](const PricePoint& p) { return p.price.str(); };

    switch (format) {
        case PromptFormat::direct:
            return join_map(pts, " ", price);

        case PromptFormat::column: {
            // Table layout quirk kept as-is: short-term attaches the colon,
            // long-term has a space after it.
            std::string sep = is_short ? ":" : ": ";
            return rc.time + sep + join_map(pts, " ", label) + "\n" + rc.value + sep +
                   join_map(pts, " ", price);
        }

        case PromptFormat::row: {
            std::string out = rc.time + " " + rc.value;
            for (const auto& p : pts) out += "\n" + label(p) + " " + price(p);
            return out;
        }

        case PromptFormat::python_list:
            return rc.time + " = [" +
                   join_map(pts, ", ", [&](const PricePoint& p) {
                       return "\"" + label(p) + "\"";
                   }) +
                   "] " + rc.value + " = [" + join_map(pts, ", ", price) + "]";

        case PromptFormat::python_list_nested:
            return rc.value + " = [" +
                   join_map(pts, ", ",
                            [&](const PricePoint& p) {
                                return "[\"" + label(p) + "\", " + price(p) + "]";
                            }) +
                   "]";

        case PromptFormat::python_dictionary:
            return rc.value + " = {" +
                   join_map(pts, ", ",
                            [&](const PricePoint& p) {
                                return "\"" + label(p) + "\":" + price(p);
                            }) +
                   "}";

        case PromptFormat::html_table: {
            std::string out =
                "<table><tr><th>" + rc.time + "</th><th>" + rc.value + "</th></tr>";
            for (const auto& p : pts) {
                out += "<tr><td>" + label(p) + "</td><td>" + price(p) + "</td></tr>";
            }
            return out + "</table>";
        }

        case PromptFormat::latex_table: {
            // Literal token stream as studied, not well-formed LaTeX.
            std::string out = "\\begin{table}[t] \\begin{tabular} & \\hline " + rc.time +
                              " & " + rc.value + " \\\\ \\hline \\hline";
            for (const auto& p : pts) {
                out += " " + label(p) + " & " + price(p) + " \\\\ \\hline";
            }
            return out + " \\end{tabular} \\end{table}";
        }

        case PromptFormat::text_english:
        case PromptFormat::text_japanese: {
            bool ja = rc.language == TemplateLanguage::japanese;
            return join_map(pts, "\n", [&](const PricePoint& p) {
                if (ja) {
                    std::string head =
                        is_short ? label(p) + "時点の" + rc.value + "は"
                                 : std::to_string(std::get<DayOffset>(p.when).days_ago) +
                                       "日前の" + rc.value + "終値は";
                    return head + price(p) + rc.suffix + "。";
                }
                if (is_short) {
                    return rc.value + " as of " + label(p) + " is " + price(p) + " " +
                           rc.suffix + ".";
                }
                return rc.value + " closing stock price as of " +
                       detail::day_phrase_english(
                           std::get<DayOffset>(p.when).days_ago) +
                       " was " + price(p) + " " + rc.suffix + ".";
            });
        }
    }
    throw Error("bad format");
}

/// Serialized short-term view at target_time, then the long-term series,
/// joined by a single newline. This is the `Input:` body of a prompt block.
inline std::string serialize_pair(const TaskInstance& t, PromptFormat format,
                                  const SerializerConfig& cfg = {}) {
    PriceSeries windowed = window_until(t.short_term, t.target_time);
    return serialize(windowed, format, cfg) + "\n" + serialize(t.long_term, format, cfg);
}

}  // namespace tsprompt
