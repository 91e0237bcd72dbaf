// tsprompt: serialize stock-price series into prompt formats, build
// zero/few-shot prompts, run generation experiments, and score the outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsprompt/consistency.hpp"
#include "tsprompt/experiment.hpp"
#include "tsprompt/fixtures.hpp"
#include "tsprompt/llm_client.hpp"
#include "tsprompt/metrics.hpp"
#include "tsprompt/prompt_builder.hpp"
#include "tsprompt/serializers.hpp"
#include "tsprompt/timeseries.hpp"

namespace {

using namespace tsprompt;

void apply_config_pair(SerializerConfig& cfg, const std::string& pair) {
    size_t eq = pair.find('=');
    if (eq == std::string::npos) {
        throw Error("config entry must be key=value: \"" + pair + "\"");
    }
    std::string key = trim(pair.substr(0, eq));
    std::string value = trim(pair.substr(eq + 1));
    if (key == "heading_time") {
        cfg.heading_time = value;
    } else if (key == "heading_value") {
        cfg.heading_value = value;
    } else if (key == "language") {
        if (value == "en" || value == "english") {
            cfg.language = TemplateLanguage::english;
        } else if (value == "ja" || value == "japanese") {
            cfg.language = TemplateLanguage::japanese;
        } else {
            throw Error("language must be en or ja");
        }
    } else if (key == "currency_suffix") {
        cfg.currency_suffix = value;
    } else {
        throw Error("unknown config key \"" + key + "\"");
    }
}

SerializerConfig build_serializer_config(const std::string& config_file,
                                         const std::vector<std::string>& pairs) {
    SerializerConfig cfg;
    if (!config_file.empty()) {
        std::ifstream in(config_file, std::ios::binary);
        if (!in) throw Error("cannot open config file " + config_file);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            apply_config_pair(cfg, t);
        }
    }
    for (const auto& p : pairs) apply_config_pair(cfg, p);
    return cfg;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path, std::ios::binary);
    if (!file) throw Error("cannot open output " + path);
    return file;
}

const std::string kFormatHelp =
    "direct, column, row, python-list, python-list-nested, python-dictionary, "
    "html-table, latex-table, text-english, text-japanese";

struct AggregateCsvRow {
    std::string format;
    int shots = 0;
    std::map<std::string, std::string> cells;
};

std::vector<AggregateCsvRow> read_aggregate_csv(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw Error(path + ": empty file");
    auto header = split(lines[0], ',');
    std::vector<AggregateCsvRow> rows;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        auto fields = split(lines[i], ',');
        if (fields.size() != header.size()) {
            throw Error(path + " line " + std::to_string(i + 1) + ": field count");
        }
        AggregateCsvRow row;
        for (size_t c = 0; c < header.size(); ++c) row.cells[header[c]] = fields[c];
        row.format = row.cells.at("format");
        row.shots = std::stoi(row.cells.at("shots"));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "tsprompt: stock-price series -> prompt formats -> LLM experiments -> "
        "metrics"};
    app.require_subcommand(1);

    bool quiet = false;
    bool deterministic = false;
    std::string config_file;
    std::string output;
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");
    app.add_flag("--deterministic", deterministic,
                 "Force the mock backend and a fixed base seed");
    app.add_option("--config-file", config_file,
                   "File of serializer key=value overrides");
    app.add_option("-o,--output", output, "Output file (default: stdout)");

    auto format_check = CLI::Validator(
        [](std::string& v) {
            try {
                parse_format(v);
                return std::string();
            } catch (const Error& e) {
                return std::string(e.what());
            }
        },
        "FORMAT");

    // serialize
    auto* sc = app.add_subcommand("serialize", "Render a price CSV in one format");
    std::string s_format, s_kind, s_in;
    std::vector<std::string> s_config;
    sc->add_option("--format", s_format, kFormatHelp)->required()->check(format_check);
    sc->add_option("--kind", s_kind, "short or long")
        ->required()
        ->check(CLI::IsMember({"short", "long"}));
    sc->add_option("--in", s_in, "Input CSV (timestamp,price)")->required();
    sc->add_option("--config", s_config, "key=value overrides (repeatable)");
    sc->callback([&] {
        auto kind = s_kind == "short" ? SeriesKind::short_term : SeriesKind::long_term;
        PriceSeries series = load_price_csv_file(s_in, kind);
        SerializerConfig cfg = build_serializer_config(config_file, s_config);
        std::ofstream file;
        auto& out = open_output(file, output);
        out << serialize(series, parse_format(s_format), cfg) << '\n';
    });

    // build-prompt
    auto* bc = app.add_subcommand("build-prompt", "Assemble a zero/few-shot prompt");
    std::string b_dataset, b_target, b_format;
    int b_shots = 0;
    uint64_t b_seed = 0;
    std::vector<std::string> b_config;
    bc->add_option("--dataset", b_dataset, "Dataset JSONL")->required();
    bc->add_option("--target-id", b_target, "Target instance id")->required();
    bc->add_option("--format", b_format, kFormatHelp)->required()->check(format_check);
    bc->add_option("--shots", b_shots, "Shot count 0..10")
        ->required()
        ->check(CLI::Range(0, kMaxShots));
    bc->add_option("--seed", b_seed, "Shot sampling seed");
    bc->add_option("--config", b_config, "key=value overrides (repeatable)");
    bc->callback([&] {
        auto dataset = load_dataset_jsonl_file(b_dataset);
        const TaskInstance& target = find_instance(dataset, b_target);
        std::vector<TaskInstance> pool;
        for (const auto& t : dataset) {
            if (t.split == Split::train && t.id != target.id) pool.push_back(t);
        }
        auto shots = sample_shots(pool, b_shots, b_seed);
        SerializerConfig cfg = build_serializer_config(config_file, b_config);
        PromptBundle bundle = build_prompt(target, shots, parse_format(b_format), cfg);
        bundle.seed = b_seed;
        if (!quiet) {
            std::fprintf(stderr, "prompt: %zu bytes, %d shots, target %s\n",
                         bundle.text.size(), bundle.shot_count,
                         bundle.target_id.c_str());
        }
        std::ofstream file;
        auto& out = open_output(file, output);
        out << bundle.text;
    });

    // run
    auto* rc = app.add_subcommand("run", "Execute (or resume) an experiment plan");
    std::string r_plan, r_dataset, r_out = "runs";
    std::optional<size_t> r_limit;
    rc->add_option("--plan", r_plan, "Plan file (key = value lines)")->required();
    rc->add_option("--dataset", r_dataset, "Dataset JSONL")->required();
    rc->add_option("--out", r_out, "Run output root (default: runs)");
    rc->add_option("--limit-new", r_limit,
                   "Stop after this many new backend calls; rerun to resume");
    rc->callback([&] {
        ExperimentPlan plan = parse_plan_file(r_plan);
        if (deterministic) {
            plan.backend.kind = BackendKind::mock;
            plan.base_seed = 0;
        }
        auto dataset = load_dataset_jsonl_file(r_dataset);
        RunOptions opts;
        opts.max_new_records = r_limit;
        opts.quiet = quiet;
        RunOutcome outcome = run_experiment(plan, dataset, r_out, opts);
        if (!outcome.complete) {
            std::cout << "interrupted after " << outcome.new_records
                      << " new records (" << outcome.reused_records
                      << " reused); rerun the same command to resume\n";
            return;
        }
        for (const auto& r : outcome.results) {
            if (!r.valid) {
                std::fprintf(stderr,
                             "warning: cell %s k=%d rep=%d invalid (%zu/%zu failures)\n",
                             format_name(r.format).c_str(), r.shots, r.repeat,
                             r.n_excluded, r.n_records);
            }
        }
        std::cout << "run complete: " << outcome.run_dir.string() << "\n"
                  << "aggregate: " << (outcome.run_dir / "aggregate.csv").string()
                  << "\n";
    });

    // evaluate
    auto* ec = app.add_subcommand("evaluate", "Score candidates against references");
    std::string e_cands, e_refs, e_scheme = "char", e_embedder;
    bool e_sentence = false;
    ec->add_option("--candidates", e_cands, "Candidate file, one text per line")
        ->required();
    ec->add_option("--references", e_refs, "Reference file, one text per line")
        ->required();
    ec->add_option("--scheme", e_scheme, "char or ws")
        ->check(CLI::IsMember({"char", "ws"}));
    ec->add_option("--embedder", e_embedder,
                   "Embedding backend: mock or an HTTP endpoint URL");
    ec->add_flag("--sentence-bleu", e_sentence,
                 "Mean per-pair BLEU instead of corpus BLEU");
    ec->callback([&] {
        auto cands = read_lines(e_cands);
        auto refs = read_lines(e_refs);
        if (cands.size() != refs.size()) {
            throw Error("candidate/reference line count mismatch (" +
                        std::to_string(cands.size()) + " vs " +
                        std::to_string(refs.size()) + ")");
        }
        TokenizationScheme scheme = parse_scheme(e_scheme);
        std::unique_ptr<Embedder> embedder;
        if (!e_embedder.empty() && e_embedder != "none") {
            embedder = e_embedder == "mock"
                           ? std::unique_ptr<Embedder>(new HashEmbedder(scheme))
                           : std::unique_ptr<Embedder>(new HttpEmbedder(e_embedder));
        }
        MetricReport report =
            evaluate_all(cands, refs, scheme, embedder.get(), e_sentence);
        std::ofstream file;
        auto& out = open_output(file, output);
        out << metric_report_json(report).dump(2) << '\n';
    });

    // report
    auto* pc = app.add_subcommand("report", "Pretty-print a run's aggregate grid");
    std::string p_run, p_metric = "bleu";
    pc->add_option("--run", p_run, "Run directory (runs/<plan-hash>)")->required();
    pc->add_option("--metric", p_metric, "bleu, meteor, or bertscore")
        ->check(CLI::IsMember({"bleu", "meteor", "bertscore"}));
    pc->callback([&] {
        auto rows = read_aggregate_csv(
            (std::filesystem::path(p_run) / "aggregate.csv").string());
        std::string mean_col = p_metric + "_mean";
        std::string std_col = p_metric + "_std";
        if (p_metric == "bertscore") {
            mean_col = "bertscore_mean";
            std_col = "bertscore_std";
        }
        std::vector<int> shot_cols;
        std::vector<std::string> formats;
        for (const auto& r : rows) {
            if (std::find(shot_cols.begin(), shot_cols.end(), r.shots) ==
                shot_cols.end()) {
                shot_cols.push_back(r.shots);
            }
            if (std::find(formats.begin(), formats.end(), r.format) == formats.end()) {
                formats.push_back(r.format);
            }
        }
        std::sort(shot_cols.begin(), shot_cols.end());
        std::ofstream file;
        auto& out = open_output(file, output);
        out << p_metric << " (mean, std over repeats)\n";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%-20s", "format");
        out << buf;
        for (int k : shot_cols) {
            std::snprintf(buf, sizeof(buf), "%18s", (std::to_string(k) + "-shot").c_str());
            out << buf;
        }
        out << '\n';
        for (const auto& f : formats) {
            std::snprintf(buf, sizeof(buf), "%-20s", f.c_str());
            out << buf;
            for (int k : shot_cols) {
                std::string cell = "-";
                for (const auto& r : rows) {
                    if (r.format == f && r.shots == k) {
                        const auto& mean = r.cells.at(mean_col);
                        const auto& sd = r.cells.at(std_col);
                        if (!mean.empty()) cell = mean + " (" + sd + ")";
                        break;
                    }
                }
                std::snprintf(buf, sizeof(buf), "%18s", cell.c_str());
                out << buf;
            }
            out << '\n';
        }
    });

    // check-consistency
    auto* cc = app.add_subcommand("check-consistency",
                                  "Judge generated comments against gold movement");
    std::string c_dataset, c_generations, c_lexicon;
    bool c_magnitude = false;
    cc->add_option("--dataset", c_dataset, "Dataset JSONL")->required();
    cc->add_option("--generations", c_generations,
                   "JSONL of {id, comment[, method]} lines")
        ->required();
    cc->add_option("--lexicon", c_lexicon, "Movement term TSV (default: built-in)");
    cc->add_flag("--check-magnitude", c_magnitude,
                 "Also verify N円高/N円安 figures against the gold magnitude");
    cc->callback([&] {
        auto dataset = load_dataset_jsonl_file(c_dataset);
        MovementLexicon lexicon = c_lexicon.empty() ? MovementLexicon::defaults()
                                                    : MovementLexicon::load_file(c_lexicon);
        struct Counts {
            size_t consistent = 0, inconsistent = 0, noclaim = 0, mag_mismatch = 0;
        };
        std::map<std::string, Counts> methods;
        auto lines = read_lines(c_generations);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(lines[i]);
            } catch (const nlohmann::json::exception& e) {
                throw Error(c_generations + " line " + std::to_string(i + 1) + ": " +
                            e.what());
            }
            std::string id = j.at("id").get<std::string>();
            std::string comment = j.at("comment").get<std::string>();
            std::string method = j.value("method", "default");
            const TaskInstance& inst = find_instance(dataset, id);
            MovementLabel gold = derive_gold_label(inst);
            Counts& counts = methods[method];
            switch (judge(comment, gold, lexicon)) {
                case Judgment::consistent: ++counts.consistent; break;
                case Judgment::inconsistent: ++counts.inconsistent; break;
                case Judgment::no_claim: ++counts.noclaim; break;
            }
            if (c_magnitude) {
                for (const auto& claim : check_magnitude_claims(comment, gold)) {
                    if (!claim.matches) {
                        ++counts.mag_mismatch;
                        break;
                    }
                }
            }
        }
        std::ofstream file;
        auto& out = open_output(file, output);
        out << "method,consistent,inconsistent,noclaim";
        if (c_magnitude) out << ",magnitude_mismatch";
        out << '\n';
        for (const auto& [method, counts] : methods) {
            out << method << ',' << counts.consistent << ',' << counts.inconsistent
                << ',' << counts.noclaim;
            if (c_magnitude) out << ',' << counts.mag_mismatch;
            out << '\n';
        }
    });

    // gen-fixtures
    auto* gc = app.add_subcommand("gen-fixtures", "Synthesize a random-walk dataset");
    std::string g_out;
    size_t g_train = 30, g_valid = 5, g_test = 10;
    uint64_t g_seed = 42;
    gc->add_option("--out", g_out, "Output JSONL path")->required();
    gc->add_option("--train", g_train, "Train instances (default 30)");
    gc->add_option("--valid", g_valid, "Valid instances (default 5)");
    gc->add_option("--test", g_test, "Test instances (default 10)");
    gc->add_option("--seed", g_seed, "Generator seed (default 42)");
    gc->callback([&] {
        auto dataset = generate_fixture_dataset(g_train, g_valid, g_test, g_seed);
        std::ofstream out(g_out, std::ios::binary);
        if (!out) throw Error("cannot open output " + g_out);
        save_dataset_jsonl(dataset, out);
        if (!quiet) {
            std::fprintf(stderr, "wrote %zu instances (%zu/%zu/%zu) to %s\n",
                         dataset.size(), g_train, g_valid, g_test, g_out.c_str());
        }
    });

    // global flags are accepted after the subcommand name as well
    for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; })) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
