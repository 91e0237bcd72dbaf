#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsprompt/timeseries.hpp"

using namespace tsprompt;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr interleaved
};

CliResult run_cli(const std::string& args) {
    std::string cmd = std::string(TSPROMPT_BIN) + " " + args + " 2>&1";
    std::array<char, 4096> buf;
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.output.append(buf.data(), n);
    }
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& stem) {
        path = fs::temp_directory_path() / (stem + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        fs::path p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
    std::string operator/(const std::string& name) const {
        return (path / name).string();
    }
};

const char* kShortCsv =
    "timestamp,price\n"
    "15:00,9988.05\n"
    "14:55,9982.06\n"
    "14:50,9978.11\n"
    "14:45,9972.66\n"
    "14:40,9967.11\n"
    "14:35,9961.37\n";

}  // namespace

TEST_CASE("serialize emits the direct format to stdout") {
    TempDir dir("cli_serialize_");
    auto csv = dir.file("short.csv", kShortCsv);
    auto r = run_cli("serialize --in " + csv + " --kind short --format direct");
    CHECK(r.exit_code == 0);
    CHECK(r.output == "9988.05 9982.06 9978.11 9972.66 9967.11 9961.37\n");
}

TEST_CASE("serialize honors config pairs") {
    TempDir dir("cli_serialize_cfg_");
    auto csv = dir.file("short.csv", kShortCsv);
    auto r = run_cli("serialize --in " + csv +
                     " --kind short --format column --config heading_value=TOPIX");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("TOPIX:9988.05") != std::string::npos);
}

TEST_CASE("bogus format name exits 2 with an error prefix") {
    TempDir dir("cli_badfmt_");
    auto csv = dir.file("short.csv", kShortCsv);
    auto r = run_cli("serialize --in " + csv + " --kind short --format yaml");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("missing input file exits 1") {
    auto r = run_cli("serialize --in /nonexistent.csv --kind short --format direct");
    CHECK(r.exit_code == 1);
    CHECK(r.output.rfind("error:", 0) == 0);
}

TEST_CASE("missing subcommand exits 2 and help exits 0") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("serialize --help").exit_code == 0);
}

TEST_CASE("gen-fixtures output loads back and feeds build-prompt") {
    TempDir dir("cli_fixtures_");
    auto ds_path = dir / "ds.jsonl";
    auto r = run_cli("gen-fixtures --out " + ds_path +
                     " --train 8 --valid 1 --test 3 --seed 4");
    REQUIRE(r.exit_code == 0);
    auto ds = load_dataset_jsonl_file(ds_path);
    CHECK(ds.size() == 12);
    std::string test_id;
    for (const auto& t : ds) {
        if (t.split == Split::test) {
            test_id = t.id;
            break;
        }
    }
    auto p = run_cli("build-prompt --dataset " + ds_path + " --target-id " + test_id +
                     " --format direct --shots 2 --seed 9");
    CHECK(p.exit_code == 0);
    CHECK(count_occurrences(p.output, "###") == 3);
    CHECK(count_occurrences(p.output, "Output:") == 3);
}

TEST_CASE("run executes a mock plan and emits the aggregate") {
    TempDir dir("cli_run_");
    auto ds_path = dir / "ds.jsonl";
    REQUIRE(run_cli("gen-fixtures --out " + ds_path +
                    " --train 8 --valid 0 --test 4 --seed 2")
                .exit_code == 0);
    auto plan_path = dir.file("plan.txt",
                              "formats = direct\n"
                              "shot_counts = 0, 1\n"
                              "repeats = 2\n"
                              "backend = mock\n"
                              "embedder = mock\n");
    auto out_dir = dir / "runs";
    auto r = run_cli("run --plan " + plan_path + " --dataset " + ds_path + " --out " +
                     out_dir);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("run complete") != std::string::npos);
    bool found = false;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        if (fs::exists(entry.path() / "aggregate.csv")) {
            found = true;
            std::ifstream in(entry.path() / "aggregate.csv");
            std::string header;
            std::getline(in, header);
            CHECK(header.rfind("format,shots,", 0) == 0);
            size_t rows = 0;
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty()) ++rows;
            }
            CHECK(rows == 2);
        }
    }
    CHECK(found);
}

TEST_CASE("run with --limit-new stops early and resumes") {
    TempDir dir("cli_limit_");
    auto ds_path = dir / "ds.jsonl";
    REQUIRE(run_cli("gen-fixtures --out " + ds_path +
                    " --train 6 --valid 0 --test 4 --seed 2")
                .exit_code == 0);
    auto plan_path = dir.file("plan.txt",
                              "formats = direct\n"
                              "shot_counts = 0\n"
                              "repeats = 2\n");
    auto out_dir = dir / "runs";
    auto first = run_cli("run --plan " + plan_path + " --dataset " + ds_path +
                         " --out " + out_dir + " --limit-new 3");
    REQUIRE(first.exit_code == 0);
    CHECK(first.output.find("interrupted") != std::string::npos);
    auto second = run_cli("run --plan " + plan_path + " --dataset " + ds_path +
                          " --out " + out_dir);
    REQUIRE(second.exit_code == 0);
    CHECK(second.output.find("run complete") != std::string::npos);
}

TEST_CASE("evaluate scores candidate and reference files") {
    TempDir dir("cli_eval_");
    auto cand = dir.file("cand.txt", "a b c d\n");
    auto ref = dir.file("ref.txt", "a b c d e\n");
    auto r = run_cli("evaluate --candidates " + cand + " --references " + ref +
                     " --scheme ws");
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.output);
    CHECK(j.at("bleu").get<double>() == Catch::Approx(77.88).margin(0.01));
    CHECK(j.at("n_pairs") == 1);
    CHECK(j.at("bertscore_f1").is_null());
    auto r2 = run_cli("evaluate --candidates " + cand + " --references " + ref +
                      " --scheme ws --embedder mock");
    REQUIRE(r2.exit_code == 0);
    CHECK_FALSE(nlohmann::json::parse(r2.output).at("bertscore_f1").is_null());
    auto mismatch = dir.file("short.txt", "a\nb\n");
    CHECK(run_cli("evaluate --candidates " + cand + " --references " + mismatch)
              .exit_code == 1);
}

TEST_CASE("check-consistency reports judgment counts") {
    TempDir dir("cli_consistency_");
    auto ds_path = dir / "ds.jsonl";
    REQUIRE(run_cli("gen-fixtures --out " + ds_path +
                    " --train 0 --valid 0 --test 5 --seed 6")
                .exit_code == 0);
    auto ds = load_dataset_jsonl_file(ds_path);
    std::ostringstream gens;
    for (const auto& t : ds) {
        gens << nlohmann::json{{"id", t.id}, {"comment", t.reference_comment}}.dump()
             << "\n";
    }
    auto gen_path = dir.file("gens.jsonl", gens.str());
    auto r = run_cli("check-consistency --dataset " + ds_path + " --generations " +
                     gen_path);
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.rfind("method,consistent,inconsistent,noclaim", 0) == 0);
    CHECK(r.output.find("default,") != std::string::npos);
    CHECK(r.output.find(",0,") != std::string::npos);
}

TEST_CASE("quiet flag suppresses progress chatter") {
    TempDir dir("cli_quiet_");
    auto ds_path = dir / "ds.jsonl";
    REQUIRE(run_cli("gen-fixtures --out " + ds_path +
                    " --train 4 --valid 0 --test 2 --seed 1")
                .exit_code == 0);
    auto plan_path = dir.file("plan.txt", "formats = direct\nshot_counts = 0\n");
    auto loud = run_cli("run --plan " + plan_path + " --dataset " + ds_path +
                        " --out " + (dir / "r1"));
    auto quiet = run_cli("-q run --plan " + plan_path + " --dataset " + ds_path +
                         " --out " + (dir / "r2"));
    REQUIRE(loud.exit_code == 0);
    REQUIRE(quiet.exit_code == 0);
    CHECK(loud.output.find("cell ") != std::string::npos);
    CHECK(quiet.output.find("cell ") == std::string::npos);
}

TEST_CASE("deterministic flag forces the mock backend") {
    TempDir dir("cli_det_");
    auto ds_path = dir / "ds.jsonl";
    REQUIRE(run_cli("gen-fixtures --out " + ds_path +
                    " --train 4 --valid 0 --test 2 --seed 1")
                .exit_code == 0);
    auto plan_path = dir.file("plan.txt",
                              "formats = direct\n"
                              "shot_counts = 0\n"
                              "backend = http\n"
                              "endpoint_url = http://127.0.0.1:1/v1\n"
                              "base_seed = 77\n");
    auto r = run_cli("--deterministic run --plan " + plan_path + " --dataset " +
                     ds_path + " --out " + (dir / "runs"));
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("run complete") != std::string::npos);
}

TEST_CASE("output flag redirects to a file") {
    TempDir dir("cli_output_");
    auto csv = dir.file("short.csv", kShortCsv);
    auto out_path = dir / "direct.txt";
    auto r = run_cli("serialize --in " + csv +
                     " --kind short --format direct -o " + out_path);
    REQUIRE(r.exit_code == 0);
    std::ifstream in(out_path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == "9988.05 9982.06 9978.11 9972.66 9967.11 9961.37\n");
}
