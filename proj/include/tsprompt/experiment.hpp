#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsprompt/consistency.hpp"
#include "tsprompt/hash.hpp"
#include "tsprompt/llm_client.hpp"
#include "tsprompt/metrics.hpp"
#include "tsprompt/prompt_builder.hpp"
#include "tsprompt/serializers.hpp"
#include "tsprompt/timeseries.hpp"

namespace tsprompt {

/// Full grid description: formats x shot counts x repeats, plus backend and
/// scoring configuration.
struct ExperimentPlan {
    std::vector<PromptFormat> formats;
    std::vector<int> shot_counts;
    int repeats = 1;
    uint64_t base_seed = 0;
    std::vector<std::string> test_ids;  // empty: every test-split instance
    BackendConfig backend;
    TokenizationScheme scheme = TokenizationScheme::character;
    std::string embedder = "none";  // none | mock | http(s) URL
};

namespace detail {

inline std::vector<std::string> split_csv_list(const std::string& value) {
    std::vector<std::string> out;
    for (auto& item : split(value, ',')) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

inline int parse_int(const std::string& value, const std::string& key) {
    try {
        size_t idx;
        int v = std::stoi(value, &idx);
        if (idx != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw Error("invalid integer for " + key + ": \"" + value + "\"");
    }
}

}  // namespace detail

/// Parses the TOML-like `key = value` plan format. `formats` and
/// `shot_counts` are required; everything else has defaults.
inline ExperimentPlan parse_plan(std::istream& in) {
    ExperimentPlan plan;
    std::set<std::string> seen;
    std::string line;
    size_t line_no = 0;
    bool have_formats = false, have_shots = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error("plan line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) {
            throw Error("plan line " + std::to_string(line_no) + ": duplicate key " + key);
        }
        try {
            if (key == "formats") {
                for (const auto& name : detail::split_csv_list(value)) {
                    plan.formats.push_back(parse_format(name));
                }
                have_formats = true;
            } else if (key == "shot_counts") {
                for (const auto& item : detail::split_csv_list(value)) {
                    plan.shot_counts.push_back(detail::parse_int(item, key));
                }
                have_shots = true;
            } else if (key == "repeats") {
                plan.repeats = detail::parse_int(value, key);
            } else if (key == "base_seed") {
                plan.base_seed = std::stoull(value);
            } else if (key == "test_ids") {
                plan.test_ids = detail::split_csv_list(value);
            } else if (key == "backend") {
                if (value == "mock") {
                    plan.backend.kind = BackendKind::mock;
                } else if (value == "http") {
                    plan.backend.kind = BackendKind::http_chat;
                } else {
                    throw Error("backend must be mock or http");
                }
            } else if (key == "endpoint_url") {
                plan.backend.endpoint_url = value;
            } else if (key == "model_name") {
                plan.backend.model_name = value;
            } else if (key == "temperature") {
                plan.backend.temperature = std::stod(value);
            } else if (key == "max_output_tokens") {
                plan.backend.max_output_tokens = detail::parse_int(value, key);
            } else if (key == "request_timeout_ms") {
                plan.backend.request_timeout =
                    std::chrono::milliseconds(detail::parse_int(value, key));
            } else if (key == "max_retries") {
                plan.backend.max_retries = detail::parse_int(value, key);
            } else if (key == "parallelism") {
                plan.backend.parallelism = detail::parse_int(value, key);
            } else if (key == "mock_fixtures") {
                plan.backend.mock_fixture_path = value;
            } else if (key == "scheme") {
                plan.scheme = parse_scheme(value);
            } else if (key == "embedder") {
                plan.embedder = value.empty() ? "none" : value;
            } else {
                throw Error("unknown plan key \"" + key + "\"");
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw Error("plan line " + std::to_string(line_no) + ": invalid value for " +
                        key);
        }
    }
    if (!have_formats || plan.formats.empty()) throw Error("plan is missing formats");
    if (!have_shots || plan.shot_counts.empty()) throw Error("plan is missing shot_counts");
    for (size_t i = 0; i < plan.shot_counts.size(); ++i) {
        int k = plan.shot_counts[i];
        if (k < 0 || k > kMaxShots) {
            throw Error("shot count out of range 0..10: " + std::to_string(k));
        }
        if (i > 0 && plan.shot_counts[i - 1] >= k) {
            throw Error("shot_counts must be strictly ascending");
        }
    }
    if (plan.repeats < 1) throw Error("repeats must be >= 1");
    if (plan.backend.kind == BackendKind::http_chat && plan.backend.endpoint_url.empty()) {
        throw Error("http backend requires endpoint_url");
    }
    return plan;
}

inline ExperimentPlan parse_plan_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open plan " + path);
    try {
        return parse_plan(in);
    } catch (const Error& e) {
        throw Error(path + ": " + e.what());
    }
}

/// Canonical plan rendering: fixed key order, normalized values. The run
/// directory name is derived from its hash, so equal plans share a
/// directory and resume each other.
inline std::string canonical_plan_text(const ExperimentPlan& p) {
    auto list = [](const auto& items, auto&& fmt) {
        return join_map(items, ",", fmt);
    };
    char temp[32];
    std::snprintf(temp, sizeof(temp), "%.6g", p.backend.temperature);
    std::string out;
    out += "formats = " + list(p.formats, [](PromptFormat f) { return format_name(f); }) +
           "\n";
    out += "shot_counts = " +
           list(p.shot_counts, [](int k) { return std::to_string(k); }) + "\n";
    out += "repeats = " + std::to_string(p.repeats) + "\n";
    out += "base_seed = " + std::to_string(p.base_seed) + "\n";
    out += "test_ids = " + list(p.test_ids, [](const std::string& s) { return s; }) + "\n";
    out += std::string("backend = ") +
           (p.backend.kind == BackendKind::mock ? "mock" : "http") + "\n";
    out += "endpoint_url = " + p.backend.endpoint_url + "\n";
    out += "model_name = " + p.backend.model_name + "\n";
    out += std::string("temperature = ") + temp + "\n";
    out += "max_output_tokens = " + std::to_string(p.backend.max_output_tokens) + "\n";
    out += "request_timeout_ms = " +
           std::to_string(p.backend.request_timeout.count()) + "\n";
    out += "max_retries = " + std::to_string(p.backend.max_retries) + "\n";
    out += "parallelism = " + std::to_string(p.backend.parallelism) + "\n";
    out += "mock_fixtures = " + p.backend.mock_fixture_path + "\n";
    out += "scheme = " + scheme_name(p.scheme) + "\n";
    out += "embedder = " + p.embedder + "\n";
    return out;
}

inline std::string plan_hash(const ExperimentPlan& p) {
    return sha256_hex(canonical_plan_text(p)).substr(0, 12);
}

/// Independent per-cell seed; cells can therefore run in any order.
inline uint64_t cell_seed(uint64_t base_seed, PromptFormat format, int shots,
                          int repeat) {
    uint64_t s = splitmix64(base_seed ^ 0x74737072ull);
    s = splitmix64(s ^ (static_cast<uint64_t>(format) + 1));
    s = splitmix64(s ^ ((static_cast<uint64_t>(shots) + 1) << 8));
    s = splitmix64(s ^ ((static_cast<uint64_t>(repeat) + 1) << 16));
    return s;
}

/// One persisted generation, keyed by (format, shots, repeat, instance id).
struct InstanceRecord {
    PromptFormat format = PromptFormat::direct;
    int shots = 0;
    int repeat = 0;
    uint64_t seed = 0;
    std::string instance_id;
    std::vector<std::string> shot_ids;
    std::string prompt_sha256;
    size_t prompt_length = 0;
    std::string raw_response;
    std::optional<std::string> extracted;
    bool untagged = false;
    std::optional<std::string> error;
    int64_t latency_ms = 0;
    int retries = 0;
};

inline nlohmann::json record_to_json(const InstanceRecord& r) {
    nlohmann::json j;
    j["format"] = format_name(r.format);
    j["shots"] = r.shots;
    j["repeat"] = r.repeat;
    j["seed"] = r.seed;
    j["instance_id"] = r.instance_id;
    j["shot_ids"] = r.shot_ids;
    j["prompt_sha256"] = r.prompt_sha256;
    j["prompt_length"] = r.prompt_length;
    j["raw_response"] = r.raw_response;
    j["extracted"] = r.extracted ? nlohmann::json(*r.extracted) : nlohmann::json(nullptr);
    j["untagged"] = r.untagged;
    j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
    j["latency_ms"] = r.latency_ms;
    j["retries"] = r.retries;
    return j;
}

inline InstanceRecord record_from_json(const nlohmann::json& j) {
    InstanceRecord r;
    r.format = parse_format(j.at("format").get<std::string>());
    r.shots = j.at("shots").get<int>();
    r.repeat = j.at("repeat").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.instance_id = j.at("instance_id").get<std::string>();
    r.shot_ids = j.at("shot_ids").get<std::vector<std::string>>();
    r.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
    r.prompt_length = j.at("prompt_length").get<size_t>();
    r.raw_response = j.at("raw_response").get<std::string>();
    if (!j.at("extracted").is_null()) r.extracted = j.at("extracted").get<std::string>();
    r.untagged = j.at("untagged").get<bool>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    r.latency_ms = j.at("latency_ms").get<int64_t>();
    r.retries = j.at("retries").get<int>();
    return r;
}

/// Scores for one grid cell (format, shot count, repeat).
struct RunResult {
    PromptFormat format = PromptFormat::direct;
    int shots = 0;
    int repeat = 0;
    uint64_t seed = 0;
    MetricReport metrics;
    size_t consistent = 0;
    size_t inconsistent = 0;
    size_t noclaim = 0;
    size_t n_excluded = 0;
    size_t n_records = 0;
    bool valid = true;
};

struct RunOptions {
    // Stop after this many newly generated records; an interrupted run is
    // resumed by running again with the same plan and output directory.
    std::optional<size_t> max_new_records;
    bool quiet = false;
};

struct RunOutcome {
    std::vector<RunResult> results;  // empty unless complete
    size_t new_records = 0;
    size_t reused_records = 0;
    bool complete = false;
    std::filesystem::path run_dir;
};

struct AggregateRow {
    PromptFormat format = PromptFormat::direct;
    int shots = 0;
    double bleu_mean = 0, bleu_std = 0;
    double meteor_mean = 0, meteor_std = 0;
    std::optional<double> bertscore_mean, bertscore_std;
    size_t consistent = 0, inconsistent = 0, noclaim = 0, n_excluded = 0;
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& stdev) {
    mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    stdev = 0;
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
}

}  // namespace detail

/// Means and sample standard deviations over repeats per (format, shots),
/// with consistency and exclusion counts summed. Rows keep first-seen cell
/// order. Results from mixed grids (unequal repeat sets) are rejected.
inline std::vector<AggregateRow> aggregate(const std::vector<RunResult>& results) {
    if (results.empty()) throw Error("no results to aggregate");
    std::vector<std::pair<PromptFormat, int>> order;
    std::map<std::pair<PromptFormat, int>, std::vector<const RunResult*>> cells;
    for (const auto& r : results) {
        auto key = std::make_pair(r.format, r.shots);
        auto [it, fresh] = cells.emplace(key, std::vector<const RunResult*>{});
        if (fresh) order.push_back(key);
        for (const auto* prev : it->second) {
            if (prev->repeat == r.repeat) {
                throw Error("mixed results: duplicate repeat " +
                            std::to_string(r.repeat) + " for " + format_name(r.format) +
                            " k=" + std::to_string(r.shots));
            }
        }
        it->second.push_back(&r);
    }
    size_t repeats = cells.begin()->second.size();
    for (const auto& [key, rs] : cells) {
        if (rs.size() != repeats) {
            throw Error("mixed results: unequal repeat counts across cells");
        }
    }
    std::vector<AggregateRow> rows;
    for (const auto& key : order) {
        const auto& rs = cells.at(key);
        AggregateRow row;
        row.format = key.first;
        row.shots = key.second;
        std::vector<double> bleus, meteors, berts;
        bool all_bert = true;
        for (const auto* r : rs) {
            bleus.push_back(r->metrics.bleu);
            meteors.push_back(r->metrics.meteor);
            if (r->metrics.bertscore_f1) {
                berts.push_back(*r->metrics.bertscore_f1);
            } else {
                all_bert = false;
            }
            row.consistent += r->consistent;
            row.inconsistent += r->inconsistent;
            row.noclaim += r->noclaim;
            row.n_excluded += r->n_excluded;
        }
        detail::mean_std(bleus, row.bleu_mean, row.bleu_std);
        detail::mean_std(meteors, row.meteor_mean, row.meteor_std);
        if (all_bert && !berts.empty()) {
            double m, s;
            detail::mean_std(berts, m, s);
            row.bertscore_mean = m;
            row.bertscore_std = s;
        }
        rows.push_back(row);
    }
    return rows;
}

inline void write_aggregate_csv(const std::vector<AggregateRow>& rows,
                                std::ostream& out) {
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };
    out << "format,shots,bleu_mean,bleu_std,meteor_mean,meteor_std,"
           "bertscore_mean,bertscore_std,consistent,inconsistent,noclaim,"
           "n_excluded\n";
    for (const auto& r : rows) {
        out << format_name(r.format) << ',' << r.shots << ',' << num(r.bleu_mean) << ','
            << num(r.bleu_std) << ',' << num(r.meteor_mean) << ',' << num(r.meteor_std)
            << ',' << (r.bertscore_mean ? num(*r.bertscore_mean) : "") << ','
            << (r.bertscore_std ? num(*r.bertscore_std) : "") << ',' << r.consistent
            << ',' << r.inconsistent << ',' << r.noclaim << ',' << r.n_excluded << '\n';
    }
}

namespace detail {

inline std::string record_key(PromptFormat f, int shots, int repeat,
                              const std::string& id) {
    return format_name(f) + "|" + std::to_string(shots) + "|" + std::to_string(repeat) +
           "|" + id;
}

inline std::unique_ptr<Embedder> make_embedder(const std::string& spec,
                                               TokenizationScheme scheme) {
    if (spec.empty() || spec == "none") return nullptr;
    if (spec == "mock") return std::make_unique<HashEmbedder>(scheme);
    return std::make_unique<HttpEmbedder>(spec);
}

}  // namespace detail

/**
 * @brief Runs (or resumes) the full experiment grid.
 *
 * Records append to <out_root>/<plan-hash>/records.jsonl as they are
 * produced; records already present are never regenerated, which makes
 * interrupted runs resumable and re-runs idempotent. Scoring and
 * aggregate.csv emission happen only once every cell is complete.
 */
inline RunOutcome run_experiment(const ExperimentPlan& plan,
                                 const std::vector<TaskInstance>& dataset,
                                 const std::filesystem::path& out_root,
                                 const RunOptions& options = {}) {
    std::vector<TaskInstance> train;
    for (const auto& t : dataset) {
        if (t.split == Split::train) train.push_back(t);
    }
    std::vector<const TaskInstance*> tests;
    if (plan.test_ids.empty()) {
        for (const auto& t : dataset) {
            if (t.split == Split::test) tests.push_back(&t);
        }
    } else {
        for (const auto& id : plan.test_ids) {
            const TaskInstance& t = find_instance(dataset, id);
            if (t.split != Split::test) {
                throw Error("test id \"" + id + "\" is not in the test split");
            }
            tests.push_back(&t);
        }
    }
    if (tests.empty()) throw Error("no test instances selected");
    if (train.empty()) throw Error("dataset has no train split");

    RunOutcome outcome;
    outcome.run_dir = out_root / plan_hash(plan);
    std::filesystem::create_directories(outcome.run_dir);
    auto records_path = outcome.run_dir / "records.jsonl";

    std::map<std::string, InstanceRecord> done;
    if (std::filesystem::exists(records_path)) {
        std::ifstream in(records_path, std::ios::binary);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            try {
                InstanceRecord r = record_from_json(nlohmann::json::parse(line));
                done[detail::record_key(r.format, r.shots, r.repeat, r.instance_id)] =
                    std::move(r);
            } catch (const std::exception& e) {
                throw Error(records_path.string() + " line " + std::to_string(line_no) +
                            ": " + e.what());
            }
        }
    }
    outcome.reused_records = done.size();

    {
        std::ofstream meta(outcome.run_dir / "run_meta.json", std::ios::binary);
        nlohmann::json j;
        j["plan_hash"] = plan_hash(plan);
        j["plan"] = canonical_plan_text(plan);
        j["shot_policy"] =
            "one shot set per cell seed, shared across all test targets of that "
            "cell; cells redraw via seeds derived from (base_seed, format, "
            "shot count, repeat)";
        j["meteor"] = "exact-match only (no stemming or synonym matching)";
        meta << j.dump(2) << '\n';
    }

    LlmClient client(plan.backend);
    std::ofstream appender(records_path, std::ios::binary | std::ios::app);
    if (!appender) throw Error("cannot open " + records_path.string());

    bool hit_limit = false;
    for (PromptFormat format : plan.formats) {
        for (int k : plan.shot_counts) {
            for (int rep = 0; rep < plan.repeats && !hit_limit; ++rep) {
                uint64_t seed = cell_seed(plan.base_seed, format, k, rep);
                auto shots = sample_shots(train, k, seed);
                std::vector<std::string> shot_ids;
                for (const auto& s : shots) shot_ids.push_back(s.id);
                struct Pending {
                    const TaskInstance* target;
                    std::future<InstanceRecord> fut;
                };
                std::vector<Pending> pending;
                for (const TaskInstance* target : tests) {
                    if (done.count(
                            detail::record_key(format, k, rep, target->id))) {
                        continue;
                    }
                    if (options.max_new_records &&
                        outcome.new_records + pending.size() >=
                            *options.max_new_records) {
                        hit_limit = true;
                        break;
                    }
                    pending.push_back(Pending{
                        target,
                        std::async(std::launch::async, [&, target]() {
                            InstanceRecord r;
                            r.format = format;
                            r.shots = k;
                            r.repeat = rep;
                            r.seed = seed;
                            r.instance_id = target->id;
                            r.shot_ids = shot_ids;
                            try {
                                PromptBundle bundle =
                                    build_prompt(*target, shots, format);
                                bundle.seed = seed;
                                r.prompt_sha256 = sha256_hex(bundle.text);
                                r.prompt_length = bundle.text.size();
                                CompletionResult res =
                                    client.complete_with_meta(bundle.text);
                                r.raw_response = res.text;
                                r.retries = res.retries;
                                r.latency_ms = res.latency.count();
                                CommentExtraction ex = extract_comment(res.text);
                                r.extracted = ex.comment;
                                r.untagged = ex.untagged;
                            } catch (const std::exception& e) {
                                r.error = e.what();
                            }
                            return r;
                        })});
                }
                for (auto& p : pending) {
                    InstanceRecord r = p.fut.get();
                    appender << record_to_json(r).dump() << '\n';
                    appender.flush();
                    done[detail::record_key(format, k, rep, r.instance_id)] =
                        std::move(r);
                    ++outcome.new_records;
                }
                if (!options.quiet && !pending.empty()) {
                    std::fprintf(stderr, "cell %s k=%d rep=%d: %zu records\n",
                                 format_name(format).c_str(), k, rep, pending.size());
                }
            }
            if (hit_limit) break;
        }
        if (hit_limit) break;
    }
    if (hit_limit) return outcome;

    auto embedder = detail::make_embedder(plan.embedder, plan.scheme);
    MovementLexicon lexicon = MovementLexicon::defaults();
    for (PromptFormat format : plan.formats) {
        for (int k : plan.shot_counts) {
            for (int rep = 0; rep < plan.repeats; ++rep) {
                RunResult rr;
                rr.format = format;
                rr.shots = k;
                rr.repeat = rep;
                rr.seed = cell_seed(plan.base_seed, format, k, rep);
                std::vector<std::string> cands, refs;
                std::vector<const TaskInstance*> scored;
                for (const TaskInstance* target : tests) {
                    auto it =
                        done.find(detail::record_key(format, k, rep, target->id));
                    if (it == done.end()) {
                        throw Error("missing record for " + target->id);
                    }
                    ++rr.n_records;
                    if (it->second.error) {
                        ++rr.n_excluded;
                        continue;
                    }
                    cands.push_back(it->second.extracted.value_or(""));
                    refs.push_back(target->reference_comment);
                    scored.push_back(target);
                }
                if (!cands.empty()) {
                    rr.metrics =
                        evaluate_all(cands, refs, plan.scheme, embedder.get());
                    for (size_t i = 0; i < scored.size(); ++i) {
                        MovementLabel gold = derive_gold_label(*scored[i]);
                        switch (judge(cands[i], gold, lexicon)) {
                            case Judgment::consistent: ++rr.consistent; break;
                            case Judgment::inconsistent: ++rr.inconsistent; break;
                            case Judgment::no_claim: ++rr.noclaim; break;
                        }
                    }
                } else {
                    rr.metrics.scheme = plan.scheme;
                }
                rr.valid = rr.n_excluded * 10 <= rr.n_records;
                outcome.results.push_back(std::move(rr));
            }
        }
    }
    auto rows = aggregate(outcome.results);
    std::ofstream csv(outcome.run_dir / "aggregate.csv", std::ios::binary);
    write_aggregate_csv(rows, csv);
    outcome.complete = true;
    return outcome;
}

}  // namespace tsprompt
