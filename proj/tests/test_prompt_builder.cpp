#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>

#include "tsprompt/prompt_builder.hpp"

using namespace tsprompt;

namespace {

TaskInstance make_instance(const std::string& id, Split split,
                           const std::string& comment) {
    TaskInstance t;
    t.id = id;
    t.target_time = ClockTime::parse("15:00");
    std::vector<PricePoint> sp{
        {ClockTime::parse("15:00"), Price::parse("9988.05")},
        {ClockTime::parse("14:55"), Price::parse("9982.06")},
    };
    t.short_term =
        PriceSeries::create(SeriesKind::short_term, "Nikkei225", std::move(sp));
    std::vector<PricePoint> lp;
    for (int d = 7; d >= 1; --d) {
        lp.push_back({DayOffset{d}, Price::from_hundredths(990000 + d * 100)});
    }
    t.long_term =
        PriceSeries::create(SeriesKind::long_term, "Nikkei225", std::move(lp));
    t.reference_comment = comment;
    t.split = split;
    return t;
}

std::vector<TaskInstance> make_pool(int n) {
    std::vector<TaskInstance> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(make_instance("train-" + std::to_string(i), Split::train,
                                    "コメント" + std::to_string(i)));
    }
    return out;
}

}  // namespace

TEST_CASE("prompt structure has k+1 separators and k filled outputs") {
    auto pool = make_pool(12);
    auto target = make_instance("target", Split::test, "unused");
    for (int k : {0, 1, 2, 5, 10}) {
        auto shots = sample_shots(pool, k, 7);
        auto b = build_prompt(target, shots, PromptFormat::direct);
        INFO("k=" << k);
        CHECK(count_occurrences(b.text, "\n\n###\n\n") == (size_t)k + 1);
        CHECK(count_occurrences(b.text, "Input:\n") == (size_t)k + 1);
        CHECK(count_occurrences(b.text, "\nOutput: ") == (size_t)k + 1);
        CHECK(b.shot_count == k);
        CHECK(b.exemplar_ids.size() == (size_t)k);
        CHECK(b.text.rfind("Output: ") == b.text.size() - 8);
        CHECK(b.text.back() == ' ');
        CHECK(b.text.rfind(kInstruction, 0) == 0);
    }
}

TEST_CASE("zero-shot prompt is instruction plus a single target block") {
    auto target = make_instance("t", Split::test, "x");
    auto b = build_prompt(target, {}, PromptFormat::direct);
    std::string expected = std::string(kInstruction) + "\n\n###\n\nInput:\n" +
                           serialize_pair(target, PromptFormat::direct) +
                           "\nOutput: ";
    CHECK(b.text == expected);
}

TEST_CASE("each shot's reference comment appears verbatim exactly once") {
    auto pool = make_pool(8);
    auto target = make_instance("target", Split::test, "unused");
    auto shots = sample_shots(pool, 5, 3);
    auto b = build_prompt(target, shots, PromptFormat::python_dictionary);
    for (const auto& s : shots) {
        CHECK(count_occurrences(b.text, "Output: " + s.reference_comment) == 1);
    }
    CHECK(b.text.find(target.reference_comment + "\n") == std::string::npos);
}

TEST_CASE("sampling is deterministic in the seed") {
    auto pool = make_pool(30);
    auto a = sample_shots(pool, 10, 123);
    auto b = sample_shots(pool, 10, 123);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
    auto c = sample_shots(pool, 10, 124);
    bool same = true;
    for (size_t i = 0; i < a.size(); ++i) same = same && a[i].id == c[i].id;
    CHECK_FALSE(same);
}

TEST_CASE("samples are distinct instances") {
    auto pool = make_pool(10);
    for (uint64_t seed = 0; seed < 200; ++seed) {
        auto shots = sample_shots(pool, 10, seed);
        std::set<std::string> ids;
        for (const auto& s : shots) ids.insert(s.id);
        CHECK(ids.size() == 10);
    }
}

TEST_CASE("sampling is uniform over the pool") {
    auto pool = make_pool(10);
    std::map<std::string, int> hits;
    const int trials = 10000;
    for (int seed = 0; seed < trials; ++seed) {
        for (const auto& s : sample_shots(pool, 3, (uint64_t)seed)) {
            ++hits[s.id];
        }
    }
    // each instance should be drawn with frequency 3/10
    for (const auto& [id, n] : hits) {
        double freq = (double)n / trials;
        INFO(id << " freq=" << freq);
        CHECK(freq > 0.28);
        CHECK(freq < 0.32);
    }
    CHECK(hits.size() == 10);
}

TEST_CASE("shot count errors") {
    auto pool = make_pool(5);
    CHECK_THROWS_AS(sample_shots(pool, -1, 0), Error);
    CHECK_THROWS_AS(sample_shots(pool, 11, 0), Error);
    CHECK_THROWS_AS(sample_shots(pool, 6, 0), Error);
    CHECK(sample_shots(pool, 5, 0).size() == 5);
    CHECK(sample_shots(pool, 0, 0).empty());
}

TEST_CASE("build_prompt rejects duplicate shots and target collisions") {
    auto pool = make_pool(3);
    auto target = make_instance("target", Split::test, "x");
    std::vector<TaskInstance> dup{pool[0], pool[0]};
    CHECK_THROWS_AS(build_prompt(target, dup, PromptFormat::direct), Error);
    std::vector<TaskInstance> collide{pool[0], target};
    CHECK_THROWS_AS(build_prompt(target, collide, PromptFormat::direct), Error);
    std::vector<TaskInstance> eleven(11, pool[0]);
    CHECK_THROWS_AS(build_prompt(target, eleven, PromptFormat::direct), Error);
}

TEST_CASE("prompt length grows monotonically with shot count") {
    auto pool = make_pool(10);
    auto target = make_instance("target", Split::test, "x");
    size_t prev = 0;
    for (int k = 0; k <= 10; ++k) {
        auto b = build_prompt(target, sample_shots(pool, k, 5), PromptFormat::direct);
        CHECK(b.text.size() > prev);
        prev = b.text.size();
    }
}

TEST_CASE("instruction text names the comment tags") {
    std::string ins = kInstruction;
    CHECK(ins ==
          "Output the market comment at the current time in the form of a "
          "<comment>market comment</comment>.");
}
