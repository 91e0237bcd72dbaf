#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tsprompt/common.hpp"
#include "tsprompt/hash.hpp"
#include "tsprompt/utf8.hpp"

namespace tsprompt {

enum class TokenizationScheme { character, whitespace };

inline std::string scheme_name(TokenizationScheme s) {
    return s == TokenizationScheme::character ? "char" : "ws";
}

inline TokenizationScheme parse_scheme(std::string_view s) {
    if (s == "char" || s == "character") return TokenizationScheme::character;
    if (s == "ws" || s == "whitespace") return TokenizationScheme::whitespace;
    throw Error("unknown tokenization scheme \"" + std::string(s) +
                "\" (expected char or ws)");
}

/// Character mode: one token per code point, nothing stripped. Whitespace
/// mode: split on runs of Unicode whitespace.
inline std::vector<std::string> tokenize(std::string_view text,
                                         TokenizationScheme scheme) {
    if (scheme == TokenizationScheme::character) return utf8_codepoints(text);
    std::vector<std::string> out;
    std::string current;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t len;
        char32_t cp = utf8_decode_at(text, pos, len);
        if (is_unicode_space(cp)) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.append(text.substr(pos, len));
        }
        pos += len;
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

namespace detail {

/// Interns tokens of one candidate/reference pair into small integer ids.
struct TokenIds {
    std::vector<int> cand;
    std::vector<int> ref;
    int vocab = 0;

    TokenIds(const std::vector<std::string>& c, const std::vector<std::string>& r) {
        std::map<std::string, int> ids;
        auto intern = [&](const std::vector<std::string>& toks) {
            std::vector<int> out;
            out.reserve(toks.size());
            for (const auto& t : toks) {
                auto [it, fresh] = ids.emplace(t, vocab);
                if (fresh) ++vocab;
                out.push_back(it->second);
            }
            return out;
        };
        cand = intern(c);
        ref = intern(r);
    }
};

/// Packs up to 4 token ids into one key; valid while vocab < 2^16.
inline uint64_t ngram_key(const std::vector<int>& toks, size_t start, int n) {
    uint64_t key = 0;
    for (int i = 0; i < n; ++i) {
        key = (key << 16) | static_cast<uint64_t>(toks[start + i] + 1);
    }
    return key;
}

}  // namespace detail

inline constexpr double kBleuEpsilon = 1e-9;

/**
 * @brief Corpus-level BLEU, scaled 0-100.
 *
 * Geometric mean of clipped modified n-gram precisions over the orders
 * n=1..max_n that have at least one candidate n-gram, times brevity penalty
 * min(1, exp(1 - r/c)). A zero precision numerator is smoothed to 1e-9.
 * Orders with no candidate n-grams anywhere are excluded so that
 * bleu(x, x) = 100 also holds for texts shorter than max_n tokens.
 */
inline double bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::string>& references,
                   TokenizationScheme scheme, int max_n = 4) {
    if (candidates.size() != references.size()) {
        throw Error("candidate/reference count mismatch");
    }
    if (candidates.empty()) throw Error("no candidate/reference pairs");
    if (max_n < 1) throw Error("max_n must be >= 1");
    std::vector<int64_t> num(max_n, 0), den(max_n, 0);
    int64_t c_total = 0, r_total = 0;
    for (size_t p = 0; p < candidates.size(); ++p) {
        auto cand_toks = tokenize(candidates[p], scheme);
        auto ref_toks = tokenize(references[p], scheme);
        detail::TokenIds ids(cand_toks, ref_toks);
        if (ids.vocab >= (1 << 16)) throw Error("pair vocabulary too large");
        c_total += static_cast<int64_t>(ids.cand.size());
        r_total += static_cast<int64_t>(ids.ref.size());
        for (int n = 1; n <= max_n; ++n) {
            if (ids.cand.size() < static_cast<size_t>(n)) break;
            std::unordered_map<uint64_t, int64_t> ref_counts;
            if (ids.ref.size() >= static_cast<size_t>(n)) {
                for (size_t i = 0; i + n <= ids.ref.size(); ++i) {
                    ++ref_counts[detail::ngram_key(ids.ref, i, n)];
                }
            }
            std::unordered_map<uint64_t, int64_t> cand_counts;
            for (size_t i = 0; i + n <= ids.cand.size(); ++i) {
                ++cand_counts[detail::ngram_key(ids.cand, i, n)];
            }
            den[n - 1] += static_cast<int64_t>(ids.cand.size()) - n + 1;
            for (const auto& [key, count] : cand_counts) {
                auto it = ref_counts.find(key);
                if (it != ref_counts.end()) num[n - 1] += std::min(count, it->second);
            }
        }
    }
    if (c_total == 0) return 0.0;
    double log_sum = 0.0;
    int orders = 0;
    for (int n = 0; n < max_n; ++n) {
        if (den[n] == 0) continue;
        double p = num[n] > 0 ? static_cast<double>(num[n]) / static_cast<double>(den[n])
                              : kBleuEpsilon / static_cast<double>(den[n]);
        log_sum += std::log(p);
        ++orders;
    }
    if (orders == 0) return 0.0;
    double bp = c_total >= r_total
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(r_total) /
                                         static_cast<double>(c_total));
    return 100.0 * bp * std::exp(log_sum / orders);
}

/// Mean of per-pair BLEU scores; available as an alternative to the corpus
/// default.
inline double bleu_sentence_mean(const std::vector<std::string>& candidates,
                                 const std::vector<std::string>& references,
                                 TokenizationScheme scheme, int max_n = 4) {
    if (candidates.size() != references.size()) {
        throw Error("candidate/reference count mismatch");
    }
    if (candidates.empty()) throw Error("no candidate/reference pairs");
    double sum = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        sum += bleu({candidates[i]}, {references[i]}, scheme, max_n);
    }
    return sum / static_cast<double>(candidates.size());
}

// ---------------------------------------------------------------------------
// METEOR, exact matches only.

namespace detail {

struct AlignmentStats {
    int cand_len = 0;
    int ref_len = 0;
    int matches = 0;
    int chunks = 0;
};

/// Exact minimal-chunk search: iterative deepening over the number of
/// aligned blocks, enumerating blocks by ascending candidate position.
/// Sequences longer than 64 tokens or searches over the node budget fall
/// back to a greedy longest-block cover, which can only overestimate the
/// chunk count.
class ChunkMinimizer {
public:
    ChunkMinimizer(const std::vector<int>& cand, const std::vector<int>& ref,
                   std::vector<int> need, int total_need)
        : cand_(cand), ref_(ref), need_(std::move(need)), total_need_(total_need) {}

    int minimal_chunks() {
        if (total_need_ == 0) return 0;
        if (cand_.size() <= 64 && ref_.size() <= 64) {
            max_block_ = longest_common_block();
            int types = 0;
            for (int t : cand_) types = std::max(types, t + 1);
            for (int t : ref_) types = std::max(types, t + 1);
            for (int bound = 1; bound <= total_need_; ++bound) {
                nodes_ = 0;
                std::vector<int> need = need_;
                std::vector<int> avail(types, 0);
                for (int t : cand_) ++avail[t];
                int result = search(bound, 0, 0ull, need, avail, total_need_);
                if (result == kFound) return bound;
                if (result == kBudget) break;
            }
        }
        return greedy_chunks();
    }

private:
    static constexpr int kFound = 1;
    static constexpr int kFail = 0;
    static constexpr int kBudget = -1;

    /// Longest equal run between the sequences, an upper bound on any
    /// single aligned block.
    int longest_common_block() const {
        int best = 0;
        for (size_t i = 0; i < cand_.size(); ++i) {
            for (size_t j = 0; j < ref_.size(); ++j) {
                int len = 0;
                while (i + len < cand_.size() && j + len < ref_.size() &&
                       cand_[i + len] == ref_[j + len]) {
                    ++len;
                }
                best = std::max(best, len);
            }
        }
        return best;
    }

    /// Decides the leftmost undecided candidate position: start a block
    /// there (longest first) or leave it unmatched when its type keeps
    /// enough later occurrences to satisfy the remaining need.
    int search(int blocks_left, size_t i, uint64_t ref_used, std::vector<int>& need,
               std::vector<int>& avail, int remaining) {
        if (remaining == 0) return kFound;
        if (i >= cand_.size()) return kFail;
        if (blocks_left == 0) return kFail;
        // counting prune: blocks_left blocks cover at most
        // blocks_left * max_block_ tokens
        if (static_cast<int64_t>(blocks_left) * max_block_ < remaining) return kFail;
        if (++nodes_ > kNodeBudget) return kBudget;
        const int head = cand_[i];
        for (size_t j = 0; j < ref_.size(); ++j) {
            if (ref_used >> j & 1) continue;
            if (ref_[j] != head) continue;
            size_t max_len = 0;
            while (i + max_len < cand_.size() && j + max_len < ref_.size() &&
                   !(ref_used >> (j + max_len) & 1) &&
                   cand_[i + max_len] == ref_[j + max_len] &&
                   need[cand_[i + max_len]] > 0) {
                --need[cand_[i + max_len]];
                ++max_len;
            }
            for (size_t t = 0; t < max_len; ++t) ++need[cand_[i + t]];
            for (size_t len = max_len; len >= 1; --len) {
                uint64_t lmask = len == 64 ? ~0ull : (1ull << len) - 1;
                for (size_t t = 0; t < len; ++t) {
                    --need[cand_[i + t]];
                    --avail[cand_[i + t]];
                }
                int sub = search(blocks_left - 1, i + len, ref_used | (lmask << j),
                                 need, avail, remaining - static_cast<int>(len));
                for (size_t t = 0; t < len; ++t) {
                    ++need[cand_[i + t]];
                    ++avail[cand_[i + t]];
                }
                if (sub != kFail) return sub;
            }
        }
        if (avail[head] - 1 >= need[head]) {
            --avail[head];
            int sub = search(blocks_left, i + 1, ref_used, need, avail, remaining);
            ++avail[head];
            if (sub != kFail) return sub;
        }
        return kFail;
    }

    int greedy_chunks() {
        std::vector<int> need = need_;
        std::vector<char> cand_used(cand_.size(), 0), ref_used(ref_.size(), 0);
        int remaining = total_need_;
        int blocks = 0;
        while (remaining > 0) {
            size_t best_len = 0, best_i = 0, best_j = 0;
            for (size_t i = 0; i < cand_.size(); ++i) {
                for (size_t j = 0; j < ref_.size(); ++j) {
                    size_t len = 0;
                    while (i + len < cand_.size() && j + len < ref_.size() &&
                           !cand_used[i + len] && !ref_used[j + len] &&
                           cand_[i + len] == ref_[j + len] &&
                           need[cand_[i + len]] > 0) {
                        --need[cand_[i + len]];
                        ++len;
                    }
                    for (size_t t = 0; t < len; ++t) ++need[cand_[i + t]];
                    if (len > best_len) {
                        best_len = len;
                        best_i = i;
                        best_j = j;
                    }
                }
            }
            if (best_len == 0) break;
            for (size_t t = 0; t < best_len; ++t) {
                cand_used[best_i + t] = 1;
                ref_used[best_j + t] = 1;
                --need[cand_[best_i + t]];
            }
            remaining -= static_cast<int>(best_len);
            ++blocks;
        }
        return blocks;
    }

    static constexpr int64_t kNodeBudget = 200'000;
    const std::vector<int>& cand_;
    const std::vector<int>& ref_;
    std::vector<int> need_;
    int total_need_;
    int max_block_ = 0;
    int64_t nodes_ = 0;
};

inline AlignmentStats meteor_align(const std::vector<std::string>& cand_toks,
                                   const std::vector<std::string>& ref_toks) {
    TokenIds ids(cand_toks, ref_toks);
    AlignmentStats st;
    st.cand_len = static_cast<int>(ids.cand.size());
    st.ref_len = static_cast<int>(ids.ref.size());
    std::vector<int> cand_count(ids.vocab, 0), ref_count(ids.vocab, 0);
    for (int t : ids.cand) ++cand_count[t];
    for (int t : ids.ref) ++ref_count[t];
    std::vector<int> need(ids.vocab, 0);
    for (int t = 0; t < ids.vocab; ++t) {
        need[t] = std::min(cand_count[t], ref_count[t]);
        st.matches += need[t];
    }
    if (st.matches == 0) return st;
    if (ids.cand == ids.ref) {
        st.chunks = 1;
        return st;
    }
    st.chunks = ChunkMinimizer(ids.cand, ids.ref, need, st.matches).minimal_chunks();
    return st;
}

inline double meteor_from_stats(const AlignmentStats& st) {
    if (st.matches == 0 || st.cand_len == 0 || st.ref_len == 0) return 0.0;
    double m = st.matches;
    double p = m / st.cand_len;
    double r = m / st.ref_len;
    double fmean = 10.0 * p * r / (r + 9.0 * p);
    double frag = static_cast<double>(st.chunks) / m;
    double penalty = 0.5 * frag * frag * frag;
    return 100.0 * fmean * (1.0 - penalty);
}

}  // namespace detail

/// Exact-match METEOR (no stemming or synonym matching), scaled 0-100.
/// The alignment minimizes chunk count among maximal matchings.
inline double meteor_exact(const std::string& candidate, const std::string& reference,
                           TokenizationScheme scheme) {
    return detail::meteor_from_stats(detail::meteor_align(tokenize(candidate, scheme),
                                                          tokenize(reference, scheme)));
}

/// Arithmetic mean of per-pair exact-match METEOR.
inline double meteor_exact_corpus(const std::vector<std::string>& candidates,
                                  const std::vector<std::string>& references,
                                  TokenizationScheme scheme) {
    if (candidates.size() != references.size()) {
        throw Error("candidate/reference count mismatch");
    }
    if (candidates.empty()) throw Error("no candidate/reference pairs");
    double sum = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        sum += meteor_exact(candidates[i], references[i], scheme);
    }
    return sum / static_cast<double>(candidates.size());
}

// ---------------------------------------------------------------------------
// BERTScore over a pluggable embedding backend.

/// Embedding backend: one vector per token of the given text, fixed
/// dimension across all calls.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<double>> embed(const std::string& text) = 0;
};

/// Deterministic offline embedder: each distinct token maps to a fixed
/// pseudo-random unit vector, so identical tokens have cosine 1.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(TokenizationScheme scheme = TokenizationScheme::character,
                          int dim = 16)
        : scheme_(scheme), dim_(dim) {
        if (dim_ < 2) throw Error("embedding dimension must be >= 2");
    }

    std::vector<std::vector<double>> embed(const std::string& text) override {
        std::vector<std::vector<double>> out;
        for (const auto& tok : tokenize(text, scheme_)) {
            uint64_t s = sha256_prefix_u64(tok);
            std::vector<double> v(dim_);
            double norm = 0.0;
            for (int k = 0; k < dim_; ++k) {
                s = splitmix64(s);
                v[k] = static_cast<double>(s >> 11) / static_cast<double>(1ull << 53) -
                       0.5;
                norm += v[k] * v[k];
            }
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
            out.push_back(std::move(v));
        }
        return out;
    }

private:
    TokenizationScheme scheme_;
    int dim_;
};

/// Remote embedder speaking a minimal JSON protocol: POST {"input": text},
/// response {"embeddings": [[...], ...]} with one row per token.
class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(std::string url,
                          std::chrono::milliseconds timeout = std::chrono::milliseconds(
                              30000))
        : url_(std::move(url)), timeout_(timeout) {}

    std::vector<std::vector<double>> embed(const std::string& text) override;

private:
    std::string url_;
    std::chrono::milliseconds timeout_;
};

/// Corpus BERTScore F1, scaled 0-100: greedy max-cosine token matching,
/// precision over candidate tokens, recall over reference tokens, no idf
/// weighting and no baseline rescaling.
inline double bertscore_f1(const std::vector<std::string>& candidates,
                           const std::vector<std::string>& references,
                           Embedder& embedder) {
    if (candidates.size() != references.size()) {
        throw Error("candidate/reference count mismatch");
    }
    if (candidates.empty()) throw Error("no candidate/reference pairs");
    std::optional<size_t> dim;
    auto check_dim = [&dim](const std::vector<std::vector<double>>& rows) {
        for (const auto& row : rows) {
            if (!dim) dim = row.size();
            if (row.size() != *dim || row.empty()) {
                throw Error("embedding dimension mismatch");
            }
        }
    };
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (size_t k = 0; k < a.size(); ++k) {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        if (na == 0 || nb == 0) return 0.0;
        return dot / std::sqrt(na * nb);
    };
    double sum_f1 = 0.0;
    for (size_t p = 0; p < candidates.size(); ++p) {
        auto ec = embedder.embed(candidates[p]);
        auto er = embedder.embed(references[p]);
        check_dim(ec);
        check_dim(er);
        if (ec.empty() && er.empty()) {
            sum_f1 += 1.0;
            continue;
        }
        if (ec.empty() || er.empty()) continue;
        double precision = 0.0;
        for (const auto& c : ec) {
            double best = -1.0;
            for (const auto& r : er) best = std::max(best, cosine(c, r));
            precision += best;
        }
        precision /= static_cast<double>(ec.size());
        double recall = 0.0;
        for (const auto& r : er) {
            double best = -1.0;
            for (const auto& c : ec) best = std::max(best, cosine(c, r));
            recall += best;
        }
        recall /= static_cast<double>(er.size());
        if (precision > 0 && recall > 0) {
            sum_f1 += 2.0 * precision * recall / (precision + recall);
        }
    }
    return 100.0 * sum_f1 / static_cast<double>(candidates.size());
}

struct MetricReport {
    double bleu = 0.0;
    double meteor = 0.0;
    std::optional<double> bertscore_f1;
    size_t n_pairs = 0;
    TokenizationScheme scheme = TokenizationScheme::character;
};

inline nlohmann::json metric_report_json(const MetricReport& r) {
    nlohmann::json j;
    j["bleu"] = r.bleu;
    j["meteor"] = r.meteor;
    j["bertscore_f1"] = r.bertscore_f1 ? nlohmann::json(*r.bertscore_f1)
                                       : nlohmann::json(nullptr);
    j["n_pairs"] = r.n_pairs;
    j["scheme"] = scheme_name(r.scheme);
    j["notes"] = "METEOR is exact-match only (no stemming or synonym matching)";
    return j;
}

/// Scores candidates against references; bertscore_f1 is filled only when
/// an embedder is supplied.
inline MetricReport evaluate_all(const std::vector<std::string>& candidates,
                                 const std::vector<std::string>& references,
                                 TokenizationScheme scheme,
                                 Embedder* embedder = nullptr,
                                 bool sentence_bleu = false) {
    MetricReport r;
    r.n_pairs = candidates.size();
    r.scheme = scheme;
    r.bleu = sentence_bleu ? bleu_sentence_mean(candidates, references, scheme)
                           : bleu(candidates, references, scheme);
    r.meteor = meteor_exact_corpus(candidates, references, scheme);
    if (embedder) r.bertscore_f1 = bertscore_f1(candidates, references, *embedder);
    return r;
}

inline std::vector<std::vector<double>> HttpEmbedder::embed(const std::string& text) {
    auto scheme_end = url_.find("://");
    if (scheme_end == std::string::npos) throw Error("invalid embedder URL: " + url_);
    auto path_start = url_.find('/', scheme_end + 3);
    std::string base = path_start == std::string::npos ? url_ : url_.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url_.substr(path_start);
    httplib::Client client(base);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    client.set_read_timeout(static_cast<time_t>(secs.count()),
                            static_cast<long>((timeout_ - secs).count() * 1000));
    httplib::Headers headers;
    if (const char* key = std::getenv("TSPROMPT_API_KEY")) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    nlohmann::json req{{"input", text}};
    auto res = client.Post(path, headers, req.dump(), "application/json");
    if (!res) throw Error("embedder transport error: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        throw Error("embedder HTTP " + std::to_string(res->status) + ": " +
                    res->body.substr(0, 200));
    }
    try {
        auto j = nlohmann::json::parse(res->body);
        return j.at("embeddings").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception&) {
        throw Error("unparseable embedder response");
    }
}

}  // namespace tsprompt
