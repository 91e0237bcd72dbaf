#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsprompt/common.hpp"
#include "tsprompt/consistency.hpp"
#include "tsprompt/prompt_builder.hpp"
#include "tsprompt/timeseries.hpp"

namespace tsprompt {

namespace detail {

/// 16349 -> "1万6349円", 9123 -> "9123円".
inline std::string format_yen_jp(int64_t yen) {
    if (yen >= 10000) {
        int64_t man = yen / 10000;
        int64_t rest = yen % 10000;
        return std::to_string(man) + "万" + (rest ? std::to_string(rest) : "") + "円";
    }
    return std::to_string(yen) + "円";
}

/// Builds a reference comment consistent with the gold movement so the
/// synthetic data exercises the judge meaningfully.
inline std::string synth_comment(const TaskInstance& t, std::mt19937_64& gen) {
    MovementLabel gold = derive_gold_label(t);
    PriceSeries windowed = window_until(t.short_term, t.target_time);
    int64_t level_yen = windowed.points().front().price.hundredths() / 100;
    std::string session =
        t.target_time.minutes_of_day() <= 11 * 60 + 30 ? "前引け" : "大引け";
    // tails must not contain lexicon terms or they would inject movement claims
    static const char* tails[] = {"", "　売買は低調", "　円相場をにらみ一進一退",
                                  "　輸出関連株に買い"};
    std::string tail = tails[uniform_u64(gen, 0, 3)];
    if (gold.direction == Direction::flat) {
        return "日経平均、" + session + "は" + format_yen_jp(level_yen) +
               "近辺で小動き" + tail;
    }
    int64_t mag = gold.magnitude_hundredths < 0 ? -gold.magnitude_hundredths
                                                : gold.magnitude_hundredths;
    int64_t yen = (mag + 50) / 100;
    if (yen < 1) yen = 1;
    bool up = gold.direction == Direction::up;
    std::string move = std::to_string(yen) + (up ? "円高" : "円安");
    std::string term;
    if (gold.continuation == Continuation::continuation) {
        term = up ? "続伸" : "続落";
    } else if (gold.continuation == Continuation::rebound) {
        term = up ? "反発" : "反落";
    }
    std::string head = term.empty() ? "日経平均、" : "日経平均、" + term + " ";
    return head + session + "は" + move + "の" + format_yen_jp(level_yen) + tail;
}

}  // namespace detail

/**
 * @brief Synthesizes a dataset of random-walk instances.
 *
 * Short-term series follow the two trading sessions on the 5-minute grid;
 * long-term series are seven daily closes leading into the day. Reference
 * comments are template-generated Japanese market comments agreeing with
 * the derived gold movement. Deterministic in the seed.
 */
inline std::vector<TaskInstance> generate_fixture_dataset(size_t n_train, size_t n_valid,
                                                          size_t n_test, uint64_t seed) {
    if (n_train + n_valid + n_test == 0) throw Error("fixture dataset would be empty");
    std::mt19937_64 gen(splitmix64(seed ^ 0x66697874ull));
    std::vector<ClockTime> times = all_session_times();
    std::vector<TaskInstance> out;
    size_t total = n_train + n_valid + n_test;
    for (size_t i = 0; i < total; ++i) {
        TaskInstance t;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "inst-%06llu",
                      static_cast<unsigned long long>(i + 1));
        t.id = idbuf;
        t.split = i < n_train ? Split::train
                              : (i < n_train + n_valid ? Split::valid : Split::test);

        auto step = [&](int64_t max_cents) {
            return static_cast<int64_t>(detail::uniform_u64(gen, 0, 2 * max_cents)) -
                   max_cents;
        };
        int64_t close = static_cast<int64_t>(
            detail::uniform_u64(gen, 900000, 1900000));
        std::vector<PricePoint> longs;
        std::vector<int64_t> closes(8, 0);
        for (int day = 7; day >= 1; --day) {
            closes[day] = close;
            longs.push_back({DayOffset{day}, Price::from_hundredths(close)});
            close += step(15000);
            if (close < 10000) close = 10000;
        }
        t.long_term =
            PriceSeries::create(SeriesKind::long_term, "Nikkei225", std::move(longs));

        int64_t price = closes[1] + step(20000);
        if (price < 10000) price = 10000;
        size_t target_idx = detail::uniform_u64(gen, 0, times.size() - 1);
        t.target_time = times[target_idx];
        std::vector<PricePoint> shorts;
        for (size_t j = 0; j <= target_idx; ++j) {
            shorts.push_back({times[j], Price::from_hundredths(price)});
            price += step(2000);
            if (price < 10000) price = 10000;
        }
        std::reverse(shorts.begin(), shorts.end());
        t.short_term =
            PriceSeries::create(SeriesKind::short_term, "Nikkei225", std::move(shorts));

        t.reference_comment = detail::synth_comment(t, gen);
        validate_instance(t);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace tsprompt
