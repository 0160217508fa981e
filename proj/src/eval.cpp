#include "diffnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "diffnet/log.hpp"
#include "diffnet/textio.hpp"

namespace diffnet {

void EvalConfig::validate() const {
    if (top_n.empty()) throw ConfigError("top_n: needs at least one cutoff");
    for (auto n : top_n)
        if (n < 1) throw ConfigError("top_n: cutoffs must be positive");
    if (num_sampled_negatives < 1)
        throw ConfigError("num_sampled_negatives: must be at least 1");
    if (num_repetitions < 1) throw ConfigError("num_repetitions: must be at least 1");
}

std::vector<std::int32_t> rank_user(std::span<const std::int32_t> candidates,
                                    std::span<const Real> scores,
                                    std::span<const std::int32_t> test_positives) {
    if (candidates.size() != scores.size())
        throw DimError("rank_user: one score per candidate required");
    for (Real s : scores)
        if (!std::isfinite(s)) throw Error("rank_user: non-finite score");

    std::vector<std::int32_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
            return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
        return candidates[static_cast<std::size_t>(a)] < candidates[static_cast<std::size_t>(b)];
    });

    std::unordered_set<std::int32_t> targets(test_positives.begin(), test_positives.end());
    std::vector<std::int32_t> ranks;
    ranks.reserve(test_positives.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        std::int32_t item = candidates[static_cast<std::size_t>(order[pos])];
        if (targets.erase(item)) ranks.push_back(static_cast<std::int32_t>(pos + 1));
    }
    if (!targets.empty())
        throw Error("rank_user: a test positive is missing from the candidates");
    return ranks;  // ascending by construction
}

Real hit_ratio_at(std::span<const std::int32_t> hit_ranks, std::size_t num_test_positives,
                  std::int32_t n) {
    std::size_t hits = 0;
    for (std::int32_t r : hit_ranks)
        if (r <= n) ++hits;
    return num_test_positives == 0
               ? Real(0)
               : static_cast<Real>(hits) / static_cast<Real>(num_test_positives);
}

Real ndcg_at(std::span<const std::int32_t> hit_ranks, std::size_t num_test_positives,
             std::int32_t n) {
    if (num_test_positives == 0) return Real(0);
    Real dcg = 0;
    for (std::int32_t r : hit_ranks)
        if (r <= n) dcg += Real(1) / static_cast<Real>(std::log2(double(r) + 1.0));
    Real idcg = 0;
    const auto ideal = std::min<std::size_t>(num_test_positives, static_cast<std::size_t>(n));
    for (std::size_t r = 1; r <= ideal; ++r)
        idcg += Real(1) / static_cast<Real>(std::log2(double(r) + 1.0));
    return dcg / idcg;
}

std::vector<std::int32_t> sample_unrated(std::int32_t num_items,
                                         std::span<const std::int32_t> known_sorted,
                                         std::int32_t count, Rng& rng) {
    const auto pool =
        static_cast<std::int64_t>(num_items) - static_cast<std::int64_t>(known_sorted.size());
    if (pool <= 0 || count <= 0) return {};

    auto in_known = [&](std::int32_t i) {
        return std::binary_search(known_sorted.begin(), known_sorted.end(), i);
    };

    if (static_cast<std::int64_t>(count) * 2 >= pool) {
        // dense case: materialize the complement, then partially shuffle
        std::vector<std::int32_t> items;
        items.reserve(static_cast<std::size_t>(pool));
        for (std::int32_t i = 0; i < num_items; ++i)
            if (!in_known(i)) items.push_back(i);
        if (static_cast<std::int64_t>(count) >= pool) return items;
        for (std::int32_t k = 0; k < count; ++k) {
            auto j = static_cast<std::size_t>(k) +
                     static_cast<std::size_t>(rng.uniform_index(items.size() - k));
            std::swap(items[static_cast<std::size_t>(k)], items[j]);
        }
        items.resize(static_cast<std::size_t>(count));
        return items;
    }

    std::vector<std::int32_t> out;
    out.reserve(static_cast<std::size_t>(count));
    std::unordered_set<std::int32_t> drawn;
    while (out.size() < static_cast<std::size_t>(count)) {
        auto i = static_cast<std::int32_t>(rng.uniform_index(static_cast<std::uint64_t>(num_items)));
        if (in_known(i) || !drawn.insert(i).second) continue;
        out.push_back(i);
    }
    return out;
}

RankingResult evaluate(const ScoreFn& score, const DataSplit& data, const EvalConfig& cfg,
                       std::span<const std::int64_t> bucket_boundaries) {
    cfg.validate();
    const Dataset& test = data.test;
    const auto num_n = cfg.top_n.size();
    const auto reps = static_cast<std::size_t>(cfg.num_repetitions);

    RankingResult res;
    res.top_n = cfg.top_n;
    res.repetitions = cfg.num_repetitions;
    res.hr.assign(num_n, std::vector<Real>(reps, 0));
    res.ndcg.assign(num_n, std::vector<Real>(reps, 0));
    res.hit_ranks.assign(reps, {});

    std::vector<std::int32_t> eval_users;
    for (std::int32_t a = 0; a < test.num_users; ++a)
        if (!test.items_of(a).empty()) eval_users.push_back(a);
    res.users_evaluated = static_cast<std::int32_t>(eval_users.size());

    std::vector<std::int32_t> bucket_of;
    if (!bucket_boundaries.empty()) {
        bucket_of = bucket_users(data.train, bucket_boundaries);
        res.bucket_names = bucket_labels(bucket_boundaries);
        const auto nb = res.bucket_names.size();
        res.bucket_user_counts.assign(nb, 0);
        for (std::int32_t a : eval_users)
            ++res.bucket_user_counts[static_cast<std::size_t>(
                bucket_of[static_cast<std::size_t>(a)])];
        res.bucket_hr.assign(nb, std::vector<std::vector<Real>>(num_n, std::vector<Real>(reps, 0)));
        res.bucket_ndcg = res.bucket_hr;
    }

    if (eval_users.empty()) {
        logging::warn("evaluate: test split holds no positives, nothing to rank");
        res.hr_mean.assign(num_n, 0);
        res.ndcg_mean.assign(num_n, 0);
        if (!bucket_boundaries.empty()) {
            res.bucket_hr_mean.assign(res.bucket_names.size(), std::vector<Real>(num_n, 0));
            res.bucket_ndcg_mean = res.bucket_hr_mean;
        }
        return res;
    }

    std::vector<std::int32_t> known, candidates;
    std::vector<Real> scores;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.rng_seed, "rep", rep);
        auto& rep_ranks = res.hit_ranks[rep];
        rep_ranks.reserve(eval_users.size());

        std::vector<std::vector<Real>> bucket_hr_sum, bucket_ndcg_sum;
        if (!bucket_boundaries.empty()) {
            bucket_hr_sum.assign(res.bucket_names.size(), std::vector<Real>(num_n, 0));
            bucket_ndcg_sum = bucket_hr_sum;
        }

        std::vector<Real> hr_sum(num_n, 0), ndcg_sum(num_n, 0);
        for (std::int32_t a : eval_users) {
            auto targets = test.items_of(a);

            known.clear();
            auto push_all = [&](std::span<const std::int32_t> xs) {
                known.insert(known.end(), xs.begin(), xs.end());
            };
            push_all(data.train.items_of(a));
            push_all(data.validation.items_of(a));
            push_all(targets);
            std::sort(known.begin(), known.end());
            known.erase(std::unique(known.begin(), known.end()), known.end());

            Rng rng(derive_seed(rep_seed, "user", static_cast<std::uint64_t>(a)));
            auto negatives =
                sample_unrated(test.num_items, known, cfg.num_sampled_negatives, rng);

            candidates.assign(targets.begin(), targets.end());
            candidates.insert(candidates.end(), negatives.begin(), negatives.end());
            scores.resize(candidates.size());
            for (std::size_t c = 0; c < candidates.size(); ++c)
                scores[c] = score(a, candidates[c]);

            auto ranks = rank_user(candidates, scores, targets);
            for (std::size_t k = 0; k < num_n; ++k) {
                const Real h = hit_ratio_at(ranks, targets.size(), cfg.top_n[k]);
                const Real g = ndcg_at(ranks, targets.size(), cfg.top_n[k]);
                hr_sum[k] += h;
                ndcg_sum[k] += g;
                if (!bucket_boundaries.empty()) {
                    auto b = static_cast<std::size_t>(bucket_of[static_cast<std::size_t>(a)]);
                    bucket_hr_sum[b][k] += h;
                    bucket_ndcg_sum[b][k] += g;
                }
            }
            rep_ranks.emplace_back(a, std::move(ranks));
        }

        const Real inv_users = Real(1) / static_cast<Real>(eval_users.size());
        for (std::size_t k = 0; k < num_n; ++k) {
            res.hr[k][rep] = hr_sum[k] * inv_users;
            res.ndcg[k][rep] = ndcg_sum[k] * inv_users;
        }
        if (!bucket_boundaries.empty()) {
            for (std::size_t b = 0; b < res.bucket_names.size(); ++b) {
                const auto count = res.bucket_user_counts[b];
                for (std::size_t k = 0; k < num_n; ++k) {
                    res.bucket_hr[b][k][rep] =
                        count == 0 ? Real(0) : bucket_hr_sum[b][k] / static_cast<Real>(count);
                    res.bucket_ndcg[b][k][rep] =
                        count == 0 ? Real(0) : bucket_ndcg_sum[b][k] / static_cast<Real>(count);
                }
            }
        }
    }

    auto mean_over_reps = [&](const std::vector<Real>& xs) {
        Real s = 0;
        for (Real x : xs) s += x;
        return s / static_cast<Real>(xs.size());
    };
    res.hr_mean.resize(num_n);
    res.ndcg_mean.resize(num_n);
    for (std::size_t k = 0; k < num_n; ++k) {
        res.hr_mean[k] = mean_over_reps(res.hr[k]);
        res.ndcg_mean[k] = mean_over_reps(res.ndcg[k]);
    }
    if (!bucket_boundaries.empty()) {
        res.bucket_hr_mean.assign(res.bucket_names.size(), std::vector<Real>(num_n, 0));
        res.bucket_ndcg_mean = res.bucket_hr_mean;
        for (std::size_t b = 0; b < res.bucket_names.size(); ++b)
            for (std::size_t k = 0; k < num_n; ++k) {
                res.bucket_hr_mean[b][k] = mean_over_reps(res.bucket_hr[b][k]);
                res.bucket_ndcg_mean[b][k] = mean_over_reps(res.bucket_ndcg[b][k]);
            }
    }
    return res;
}

std::string format_results_table(const RankingResult& result, const std::string& model_kind,
                                 const std::string& config_digest_hex) {
    std::string out;
    out += "# config_digest=" + config_digest_hex + "\n";
    out += "# users_evaluated=" + std::to_string(result.users_evaluated) + "\n";
    for (std::size_t b = 0; b < result.bucket_names.size(); ++b)
        out += "# bucket " + result.bucket_names[b] +
               " users=" + std::to_string(result.bucket_user_counts[b]) + "\n";
    out += "model\tmetric\tn\tgroup\trepetition\tvalue\n";

    auto emit_group = [&](const std::string& group, const char* metric,
                          const std::vector<std::vector<Real>>& per_rep,
                          const std::vector<Real>& mean) {
        for (std::size_t k = 0; k < result.top_n.size(); ++k) {
            for (std::size_t rep = 0; rep < per_rep[k].size(); ++rep)
                out += model_kind + "\t" + metric + "\t" + std::to_string(result.top_n[k]) +
                       "\t" + group + "\t" + std::to_string(rep + 1) + "\t" +
                       format_g17(static_cast<double>(per_rep[k][rep])) + "\n";
            out += model_kind + "\t" + metric + "\t" + std::to_string(result.top_n[k]) + "\t" +
                   group + "\tmean\t" + format_g17(static_cast<double>(mean[k])) + "\n";
        }
    };

    emit_group("overall", "hr", result.hr, result.hr_mean);
    emit_group("overall", "ndcg", result.ndcg, result.ndcg_mean);
    for (std::size_t b = 0; b < result.bucket_names.size(); ++b) {
        emit_group(result.bucket_names[b], "hr", result.bucket_hr[b], result.bucket_hr_mean[b]);
        emit_group(result.bucket_names[b], "ndcg", result.bucket_ndcg[b],
                   result.bucket_ndcg_mean[b]);
    }
    return out;
}

}  // namespace diffnet
