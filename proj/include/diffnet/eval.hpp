#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffnet/dataset.hpp"
#include "diffnet/model.hpp"
#include "diffnet/rng.hpp"

namespace diffnet {

struct EvalConfig {
    std::vector<std::int32_t> top_n = {5, 10, 15};
    std::int32_t num_sampled_negatives = 1000;
    std::int32_t num_repetitions = 10;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

using ScoreFn = std::function<Real(std::int32_t user, std::int32_t item)>;

inline ScoreFn make_score_fn(const RankingModel& model) {
    return [&model](std::int32_t u, std::int32_t i) { return model.score(u, i); };
}

// 1-based ranks of the test positives among the candidates, scored descending
// with ties broken by ascending item id. Every test positive must appear in
// `candidates`. Returned ranks are sorted ascending.
std::vector<std::int32_t> rank_user(std::span<const std::int32_t> candidates,
                                    std::span<const Real> scores,
                                    std::span<const std::int32_t> test_positives);

// per-user metric contributions from hit ranks
Real hit_ratio_at(std::span<const std::int32_t> hit_ranks, std::size_t num_test_positives,
                  std::int32_t n);
Real ndcg_at(std::span<const std::int32_t> hit_ranks, std::size_t num_test_positives,
             std::int32_t n);

// `count` distinct items outside the sorted `known` list, uniform without
// replacement; returns the whole complement when it is smaller than `count`.
std::vector<std::int32_t> sample_unrated(std::int32_t num_items,
                                         std::span<const std::int32_t> known_sorted,
                                         std::int32_t count, Rng& rng);

struct RankingResult {
    std::vector<std::int32_t> top_n;
    std::int32_t repetitions = 0;
    std::int32_t users_evaluated = 0;          // users holding test positives
    std::vector<std::vector<Real>> hr, ndcg;   // [n_index][repetition]
    std::vector<Real> hr_mean, ndcg_mean;      // [n_index], mean over repetitions

    std::vector<std::string> bucket_names;     // empty without bucket boundaries
    std::vector<std::int32_t> bucket_user_counts;
    std::vector<std::vector<std::vector<Real>>> bucket_hr, bucket_ndcg;  // [b][n][rep]
    std::vector<std::vector<Real>> bucket_hr_mean, bucket_ndcg_mean;     // [b][n]

    // per repetition: (user, that user's hit ranks), evaluated users ascending
    std::vector<std::vector<std::pair<std::int32_t, std::vector<std::int32_t>>>> hit_ranks;

    friend bool operator==(const RankingResult&, const RankingResult&) = default;
};

// Sampled top-N evaluation of data.test: per user and repetition the
// candidates are that user's test positives plus num_sampled_negatives items
// they never interacted with in any split. HR@N averages hits/|T_a| over
// users, NDCG@N averages DCG/IDCG; repetitions are averaged at the end.
// Users without test positives are skipped. Deterministic given rng_seed.
RankingResult evaluate(const ScoreFn& score, const DataSplit& data, const EvalConfig& cfg,
                       std::span<const std::int64_t> bucket_boundaries = {});

// TSV rows (model, metric, n, group, repetition|mean, value) plus comment
// header lines; byte-stable for identical results.
std::string format_results_table(const RankingResult& result, const std::string& model_kind,
                                 const std::string& config_digest_hex);

}  // namespace diffnet
