#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tsprompt/experiment.hpp"
#include "tsprompt/fixtures.hpp"

using namespace tsprompt;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// records with the wall-clock latency field zeroed, since measured time is
// the one record field that may differ between otherwise identical runs
std::string normalized_records(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::string line, out;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        j["latency_ms"] = 0;
        out += j.dump() + "\n";
    }
    return out;
}

ExperimentPlan small_plan() {
    ExperimentPlan plan;
    plan.formats = {PromptFormat::direct, PromptFormat::column};
    plan.shot_counts = {0, 2};
    plan.repeats = 2;
    plan.base_seed = 21;
    plan.embedder = "mock";
    return plan;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& stem) {
        path = fs::temp_directory_path() / (stem + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("plan parsing fills every field") {
    std::istringstream in(
        "# grid\n"
        "formats = direct, html-table\n"
        "shot_counts = 0, 5, 10\n"
        "repeats = 3\n"
        "base_seed = 99\n"
        "backend = http\n"
        "endpoint_url = http://localhost:9/v1\n"
        "model_name = test-model\n"
        "temperature = 0.5\n"
        "max_output_tokens = 64\n"
        "request_timeout_ms = 1000\n"
        "max_retries = 1\n"
        "parallelism = 8\n"
        "scheme = ws\n"
        "embedder = mock\n"
        "test_ids = a, b\n");
    auto plan = parse_plan(in);
    CHECK(plan.formats == std::vector<PromptFormat>{PromptFormat::direct,
                                                    PromptFormat::html_table});
    CHECK(plan.shot_counts == std::vector<int>{0, 5, 10});
    CHECK(plan.repeats == 3);
    CHECK(plan.base_seed == 99);
    CHECK(plan.backend.kind == BackendKind::http_chat);
    CHECK(plan.backend.endpoint_url == "http://localhost:9/v1");
    CHECK(plan.backend.model_name == "test-model");
    CHECK(plan.backend.temperature == 0.5);
    CHECK(plan.backend.max_output_tokens == 64);
    CHECK(plan.backend.request_timeout.count() == 1000);
    CHECK(plan.backend.max_retries == 1);
    CHECK(plan.backend.parallelism == 8);
    CHECK(plan.scheme == TokenizationScheme::whitespace);
    CHECK(plan.embedder == "mock");
    CHECK(plan.test_ids == std::vector<std::string>{"a", "b"});
}

TEST_CASE("plan parsing rejects malformed grids") {
    auto reject = [](const std::string& text, const std::string& needle) {
        std::istringstream in(text);
        try {
            parse_plan(in);
            FAIL("expected rejection of: " << text);
        } catch (const Error& e) {
            INFO(e.what());
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    reject("shot_counts = 0\n", "formats");
    reject("formats = direct\n", "shot_counts");
    reject("formats = direct\nshot_counts = 2, 1\n", "ascending");
    reject("formats = direct\nshot_counts = 0, 11\n", "10");
    reject("formats = direct\nshot_counts = 0\nrepeats = 0\n", "repeats");
    reject("formats = direct\nshot_counts = 0\nbackend = http\n", "endpoint_url");
    reject("formats = direct\nshot_counts = 0\nformats = column\n", "duplicate");
    reject("formats = direct\nshot_counts = 0\nbackend = grpc\n", "backend");
    reject("formats = direct\nshot_counts = 0\nmystery = 1\n", "mystery");
    reject("formats = bogus\nshot_counts = 0\n", "format");
}

TEST_CASE("canonical plan text and hash are stable across spellings") {
    std::istringstream a("formats = direct\nshot_counts = 0, 2\n");
    std::istringstream b("shot_counts = 0,2\nformats =   direct  \n# note\n");
    auto pa = parse_plan(a);
    auto pb = parse_plan(b);
    CHECK(canonical_plan_text(pa) == canonical_plan_text(pb));
    CHECK(plan_hash(pa) == plan_hash(pb));
    CHECK(plan_hash(pa).size() == 12);
    auto pc = pa;
    pc.base_seed = 1;
    CHECK(plan_hash(pc) != plan_hash(pa));
}

TEST_CASE("cell seeds differ across the grid and repeats") {
    std::set<uint64_t> seen;
    for (PromptFormat f : all_formats()) {
        for (int k : {0, 1, 5, 10}) {
            for (int rep = 0; rep < 10; ++rep) {
                seen.insert(cell_seed(7, f, k, rep));
            }
        }
    }
    CHECK(seen.size() == all_formats().size() * 4 * 10);
    CHECK(cell_seed(7, PromptFormat::direct, 0, 0) ==
          cell_seed(7, PromptFormat::direct, 0, 0));
    CHECK(cell_seed(7, PromptFormat::direct, 0, 0) !=
          cell_seed(8, PromptFormat::direct, 0, 0));
}

TEST_CASE("instance records round-trip through json") {
    InstanceRecord r;
    r.format = PromptFormat::latex_table;
    r.shots = 5;
    r.repeat = 2;
    r.seed = 12345;
    r.instance_id = "inst-000001";
    r.shot_ids = {"a", "b"};
    r.prompt_sha256 = std::string(64, 'f');
    r.prompt_length = 999;
    r.raw_response = "<comment>x</comment>";
    r.extracted = "x";
    r.untagged = false;
    r.latency_ms = 12;
    r.retries = 1;
    auto back = record_from_json(record_to_json(r));
    CHECK(back.format == r.format);
    CHECK(back.shots == r.shots);
    CHECK(back.repeat == r.repeat);
    CHECK(back.seed == r.seed);
    CHECK(back.instance_id == r.instance_id);
    CHECK(back.shot_ids == r.shot_ids);
    CHECK(back.prompt_sha256 == r.prompt_sha256);
    CHECK(back.prompt_length == r.prompt_length);
    CHECK(back.raw_response == r.raw_response);
    CHECK(back.extracted == r.extracted);
    CHECK_FALSE(back.error.has_value());
    InstanceRecord failed;
    failed.instance_id = "x";
    failed.error = "backend HTTP 500";
    auto fb = record_from_json(record_to_json(failed));
    REQUIRE(fb.error.has_value());
    CHECK_FALSE(fb.extracted.has_value());
}

TEST_CASE("aggregate averages repeats and sums counts") {
    RunResult a, b;
    a.format = b.format = PromptFormat::direct;
    a.shots = b.shots = 2;
    a.repeat = 0;
    b.repeat = 1;
    a.metrics.bleu = 40.0;
    b.metrics.bleu = 50.0;
    a.metrics.meteor = 10.0;
    b.metrics.meteor = 30.0;
    a.metrics.bertscore_f1 = 80.0;
    b.metrics.bertscore_f1 = 90.0;
    a.consistent = 3;
    b.consistent = 4;
    a.inconsistent = 1;
    b.inconsistent = 0;
    a.noclaim = 2;
    b.noclaim = 2;
    a.n_excluded = 1;
    b.n_excluded = 0;
    auto rows = aggregate({a, b});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].bleu_mean == Catch::Approx(45.0).margin(1e-9));
    // sample standard deviation over {40, 50}
    CHECK(rows[0].bleu_std == Catch::Approx(std::sqrt(50.0)).margin(1e-9));
    CHECK(rows[0].meteor_mean == Catch::Approx(20.0).margin(1e-9));
    CHECK(rows[0].meteor_std == Catch::Approx(std::sqrt(200.0)).margin(1e-9));
    REQUIRE(rows[0].bertscore_mean.has_value());
    CHECK(*rows[0].bertscore_mean == Catch::Approx(85.0).margin(1e-9));
    CHECK(rows[0].consistent == 7);
    CHECK(rows[0].inconsistent == 1);
    CHECK(rows[0].noclaim == 4);
    CHECK(rows[0].n_excluded == 1);
}

TEST_CASE("aggregate keeps single-repeat std at zero and first-seen order") {
    RunResult a;
    a.format = PromptFormat::html_table;
    a.shots = 0;
    a.metrics.bleu = 33.0;
    RunResult b = a;
    b.format = PromptFormat::direct;
    auto rows = aggregate({a, b});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].format == PromptFormat::html_table);
    CHECK(rows[1].format == PromptFormat::direct);
    CHECK(rows[0].bleu_std == 0.0);
}

TEST_CASE("aggregate rejects duplicate and unbalanced repeats") {
    RunResult a;
    a.format = PromptFormat::direct;
    a.shots = 0;
    a.repeat = 0;
    RunResult dup = a;
    CHECK_THROWS_AS(aggregate({a, dup}), Error);
    RunResult b = a;
    b.shots = 2;
    RunResult b2 = b;
    b2.repeat = 1;
    CHECK_THROWS_AS(aggregate({a, b, b2}), Error);
}

TEST_CASE("aggregate csv formats four decimals and blank bertscore") {
    RunResult a;
    a.format = PromptFormat::direct;
    a.shots = 0;
    a.metrics.bleu = 12.34567;
    a.metrics.meteor = 1.0 / 3.0;
    a.consistent = 5;
    std::ostringstream out;
    write_aggregate_csv(aggregate({a}), out);
    CHECK(out.str() ==
          "format,shots,bleu_mean,bleu_std,meteor_mean,meteor_std,"
          "bertscore_mean,bertscore_std,consistent,inconsistent,noclaim,"
          "n_excluded\n"
          "direct,0,12.3457,0.0000,0.3333,0.0000,,,5,0,0,0\n");
}

TEST_CASE("run_experiment produces the full grid deterministically") {
    auto dataset = generate_fixture_dataset(12, 2, 6, 5);
    auto plan = small_plan();
    TempDir dir_a("tsprompt_run_a_"), dir_b("tsprompt_run_b_");
    auto out_a = run_experiment(plan, dataset, dir_a.path, {.quiet = true});
    REQUIRE(out_a.complete);
    // 2 formats x 2 shot counts x 2 repeats x 6 test instances
    CHECK(out_a.new_records == 48);
    CHECK(out_a.reused_records == 0);
    REQUIRE(out_a.results.size() == 8);
    for (const auto& r : out_a.results) {
        CHECK(r.n_records == 6);
        CHECK(r.valid);
        CHECK(r.consistent + r.inconsistent + r.noclaim + r.n_excluded == 6);
        REQUIRE(r.metrics.bertscore_f1.has_value());
    }
    auto out_b = run_experiment(plan, dataset, dir_b.path, {.quiet = true});
    CHECK(read_file(out_a.run_dir / "aggregate.csv") ==
          read_file(out_b.run_dir / "aggregate.csv"));
    CHECK(normalized_records(out_a.run_dir / "records.jsonl") ==
          normalized_records(out_b.run_dir / "records.jsonl"));
    CHECK(fs::exists(out_a.run_dir / "run_meta.json"));
    auto meta = nlohmann::json::parse(read_file(out_a.run_dir / "run_meta.json"));
    CHECK(meta.at("plan_hash") == plan_hash(plan));
}

TEST_CASE("interrupted runs resume without regenerating") {
    auto dataset = generate_fixture_dataset(12, 2, 6, 5);
    auto plan = small_plan();
    TempDir dir("tsprompt_resume_"), full_dir("tsprompt_full_");
    RunOptions half{.max_new_records = 24, .quiet = true};
    auto first = run_experiment(plan, dataset, dir.path, half);
    CHECK_FALSE(first.complete);
    CHECK(first.new_records == 24);
    CHECK(first.results.empty());
    CHECK_FALSE(fs::exists(first.run_dir / "aggregate.csv"));
    auto second = run_experiment(plan, dataset, dir.path, {.quiet = true});
    REQUIRE(second.complete);
    CHECK(second.reused_records == 24);
    CHECK(second.new_records == 24);
    auto full = run_experiment(plan, dataset, full_dir.path, {.quiet = true});
    CHECK(read_file(second.run_dir / "aggregate.csv") ==
          read_file(full.run_dir / "aggregate.csv"));
    CHECK(normalized_records(second.run_dir / "records.jsonl") ==
          normalized_records(full.run_dir / "records.jsonl"));
}

TEST_CASE("shot sets are shared across targets within a cell") {
    auto dataset = generate_fixture_dataset(12, 0, 4, 9);
    ExperimentPlan plan;
    plan.formats = {PromptFormat::direct};
    plan.shot_counts = {3};
    plan.repeats = 1;
    TempDir dir("tsprompt_shots_");
    auto out = run_experiment(plan, dataset, dir.path, {.quiet = true});
    REQUIRE(out.complete);
    std::set<std::vector<std::string>> shot_sets;
    std::istringstream in(read_file(out.run_dir / "records.jsonl"));
    std::string line;
    size_t records = 0;
    while (std::getline(in, line)) {
        auto r = record_from_json(nlohmann::json::parse(line));
        shot_sets.insert(r.shot_ids);
        CHECK(r.shot_ids.size() == 3);
        ++records;
    }
    CHECK(records == 4);
    CHECK(shot_sets.size() == 1);
}

TEST_CASE("explicit test_ids restrict and validate the target set") {
    auto dataset = generate_fixture_dataset(6, 0, 4, 3);
    ExperimentPlan plan;
    plan.formats = {PromptFormat::direct};
    plan.shot_counts = {0};
    std::string test_id, train_id;
    for (const auto& t : dataset) {
        if (t.split == Split::test && test_id.empty()) test_id = t.id;
        if (t.split == Split::train && train_id.empty()) train_id = t.id;
    }
    plan.test_ids = {test_id};
    TempDir dir("tsprompt_ids_");
    auto out = run_experiment(plan, dataset, dir.path, {.quiet = true});
    REQUIRE(out.complete);
    CHECK(out.new_records == 1);
    plan.test_ids = {train_id};
    TempDir dir2("tsprompt_ids2_");
    CHECK_THROWS_AS(run_experiment(plan, dataset, dir2.path, {.quiet = true}), Error);
    plan.test_ids = {"missing-id"};
    TempDir dir3("tsprompt_ids3_");
    CHECK_THROWS_AS(run_experiment(plan, dataset, dir3.path, {.quiet = true}), Error);
}

TEST_CASE("embedder none leaves bertscore columns empty") {
    auto dataset = generate_fixture_dataset(4, 0, 2, 3);
    ExperimentPlan plan;
    plan.formats = {PromptFormat::direct};
    plan.shot_counts = {0};
    plan.embedder = "none";
    TempDir dir("tsprompt_noemb_");
    auto out = run_experiment(plan, dataset, dir.path, {.quiet = true});
    REQUIRE(out.complete);
    CHECK_FALSE(out.results[0].metrics.bertscore_f1.has_value());
    auto csv = read_file(out.run_dir / "aggregate.csv");
    CHECK(csv.find(",,") != std::string::npos);
}
