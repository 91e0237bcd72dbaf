#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsprompt/common.hpp"
#include "tsprompt/serializers.hpp"
#include "tsprompt/timeseries.hpp"

namespace tsprompt {

inline constexpr int kMaxShots = 10;

inline constexpr const char* kInstruction =
    "Output the market comment at the current time in the form of a "
    "<comment>market comment</comment>.";

/// One worked example inside a few-shot prompt.
struct Exemplar {
    std::string instance_id;
    std::string input_block;
    std::string output_comment;
};

/// Assembled prompt plus the provenance needed to reproduce it.
struct PromptBundle {
    std::string text;
    PromptFormat format = PromptFormat::direct;
    int shot_count = 0;
    uint64_t seed = 0;
    std::vector<std::string> exemplar_ids;
    std::string target_id;
};

namespace detail {

/// Uniform draw from [lo, hi] using rejection on raw 64-bit output, so the
/// sequence does not depend on the standard library's distribution choices.
template <typename Gen>
uint64_t uniform_u64(Gen& gen, uint64_t lo, uint64_t hi) {
    uint64_t span = hi - lo + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
        v = gen();
    } while (v >= limit);
    return lo + v % span;
}

}  // namespace detail

/// Draws k distinct instances uniformly without replacement; draw order is
/// the order returned. Identical (train, k, seed) always gives the same
/// draw.
inline std::vector<TaskInstance> sample_shots(const std::vector<TaskInstance>& train,
                                              int k, uint64_t seed) {
    if (k < 0) throw Error("shot count must be non-negative");
    if (k > kMaxShots) {
        throw Error("shot count " + std::to_string(k) + " exceeds the maximum of 10");
    }
    if (static_cast<size_t>(k) > train.size()) {
        throw Error("shot count " + std::to_string(k) + " exceeds pool size " +
                    std::to_string(train.size()));
    }
    std::vector<size_t> idx(train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 gen(seed);
    std::vector<TaskInstance> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        size_t j = detail::uniform_u64(gen, i, idx.size() - 1);
        std::swap(idx[i], idx[j]);
        out.push_back(train[idx[i]]);
    }
    return out;
}

/**
 * @brief Assembles the zero/few-shot prompt.
 *
 * Layout: instruction, then one block per shot, then the target block.
 * Each block is a `###` separator line framed by blank lines, an `Input:`
 * line, the serialized series pair, and an `Output:` line. Shot blocks
 * carry the reference comment after `Output: `; the target block ends with
 * `Output: ` (trailing space, no newline) for the model to continue.
 */
inline PromptBundle build_prompt(const TaskInstance& target,
                                 const std::vector<TaskInstance>& shots,
                                 PromptFormat format,
                                 const SerializerConfig& cfg = {}) {
    if (shots.size() > static_cast<size_t>(kMaxShots)) {
        throw Error("shot count exceeds the maximum of 10");
    }
    PromptBundle b;
    b.format = format;
    b.shot_count = static_cast<int>(shots.size());
    b.target_id = target.id;
    std::string text = kInstruction;
    for (const auto& shot : shots) {
        if (shot.id == target.id) {
            throw Error("shot \"" + shot.id + "\" collides with the target instance");
        }
        for (const auto& prev : b.exemplar_ids) {
            if (prev == shot.id) throw Error("duplicate shot \"" + shot.id + "\"");
        }
        b.exemplar_ids.push_back(shot.id);
        text += "\n\n###\n\nInput:\n" + serialize_pair(shot, format, cfg) +
                "\nOutput: " + shot.reference_comment;
    }
    text += "\n\n###\n\nInput:\n" + serialize_pair(target, format, cfg) + "\nOutput: ";
    b.text = std::move(text);
    return b;
}

}  // namespace tsprompt
