#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/eval.hpp"
#include "diffnet/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace diffnet;

TEST_CASE("rank_user orders by score descending with id tie-break") {
    std::vector<std::int32_t> candidates{5, 2, 9, 7};
    std::vector<Real> scores{Real(0.1), Real(0.9), Real(0.5), Real(0.9)};
    // order: 2 (0.9), 7 (0.9, higher id loses the tie), 9, 5
    auto ranks = rank_user(candidates, scores, std::vector<std::int32_t>{2});
    CHECK(ranks == std::vector<std::int32_t>{1});
    ranks = rank_user(candidates, scores, std::vector<std::int32_t>{7});
    CHECK(ranks == std::vector<std::int32_t>{2});
    ranks = rank_user(candidates, scores, std::vector<std::int32_t>{5, 9});
    CHECK(ranks == std::vector<std::int32_t>{3, 4});
}

TEST_CASE("rank_user rejects missing targets and non-finite scores") {
    std::vector<std::int32_t> candidates{1, 2};
    std::vector<Real> ok{Real(0.5), Real(0.25)};
    CHECK_THROWS_AS(rank_user(candidates, ok, std::vector<std::int32_t>{3}), Error);
    std::vector<Real> bad{Real(0.5), std::numeric_limits<Real>::quiet_NaN()};
    CHECK_THROWS_AS(rank_user(candidates, bad, std::vector<std::int32_t>{1}), Error);
}

TEST_CASE("hit ratio and ndcg hand values") {
    using ranks = std::vector<std::int32_t>;
    CHECK(hit_ratio_at(ranks{1}, 1, 5) == Real(1));
    CHECK(hit_ratio_at(ranks{6}, 1, 5) == Real(0));
    CHECK(hit_ratio_at(ranks{1, 7}, 2, 5) == Real(0.5));
    CHECK(hit_ratio_at(ranks{}, 3, 10) == Real(0));

    CHECK(ndcg_at(ranks{1}, 1, 5) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ndcg_at(ranks{3}, 1, 5) == doctest::Approx(0.5).epsilon(1e-12));  // 1/log2(4)
    CHECK(ndcg_at(ranks{8}, 1, 5) == Real(0));

    // the worked example: hits at ranks 1 and 4 of a five-item window
    const double dcg = 1.0 + 1.0 / std::log2(5.0);
    const double idcg = 1.0 + 1.0 / std::log2(3.0);
    CHECK(ndcg_at(ranks{1, 4}, 2, 5) == doctest::Approx(dcg / idcg).epsilon(1e-12));
    CHECK(ndcg_at(ranks{1, 4}, 2, 5) == doctest::Approx(0.877216).epsilon(1e-6));

    // the ideal gain only counts the window that fits: six positives filling
    // the whole five-slot window are a perfect ranking
    CHECK(ndcg_at(ranks{1, 2, 3, 4, 5}, 6, 5) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("unrated sampling avoids known items in both regimes") {
    Rng rng(42);

    // sparse knowns: rejection path
    std::vector<std::int32_t> known{10, 20, 30};
    auto got = sample_unrated(1000, known, 50, rng);
    CHECK(got.size() == 50);
    std::set<std::int32_t> seen(got.begin(), got.end());
    CHECK(seen.size() == 50);  // distinct
    for (std::int32_t i : got) {
        CHECK(i >= 0);
        CHECK(i < 1000);
        CHECK_FALSE(std::binary_search(known.begin(), known.end(), i));
    }

    // dense knowns: complement path
    std::vector<std::int32_t> most;
    for (std::int32_t i = 0; i < 90; ++i) most.push_back(i);
    got = sample_unrated(100, most, 8, rng);
    CHECK(got.size() == 8);
    for (std::int32_t i : got) CHECK(i >= 90);

    // asking for more than exists returns the whole complement
    got = sample_unrated(100, most, 50, rng);
    std::sort(got.begin(), got.end());
    CHECK(got.size() == 10);
    CHECK(got.front() == 90);
    CHECK(got.back() == 99);

    // determinism under a fixed rng seed
    Rng r1(7), r2(7);
    CHECK(sample_unrated(500, known, 20, r1) == sample_unrated(500, known, 20, r2));
}

TEST_CASE("eval config validation") {
    EvalConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    EvalConfig bad = cfg;
    bad.top_n.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.top_n = {5, 0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.num_sampled_negatives = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.num_repetitions = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("evaluate matches brute force when negatives cover the complement") {
    Dataset full = synthesize(SynthConfig{12, 25, 3.0, 0.5, 4, 6, 0.1, 51});
    DataSplit s = split(full, SplitSpec{0.25, 0.15, 4});
    REQUIRE(s.test.num_interactions > 0);

    // frozen random score table so the oracle sees the same function
    Matrix table(12, 25);
    Rng rng(99);
    for (Real& v : table.flat()) v = rng.normal();
    ScoreFn score = [&table](std::int32_t u, std::int32_t i) {
        return table(static_cast<std::size_t>(u), static_cast<std::size_t>(i));
    };

    EvalConfig cfg;
    cfg.top_n = {3, 5};
    cfg.num_sampled_negatives = 25;  // >= complement of every user
    cfg.num_repetitions = 3;
    cfg.rng_seed = 8;
    RankingResult r = evaluate(score, s, cfg);

    double hr3 = 0, ndcg5 = 0;
    std::int32_t users = 0;
    for (std::int32_t u = 0; u < 12; ++u) {
        auto targets = s.test.items_of(u);
        if (targets.empty()) continue;
        ++users;
        // candidates: targets plus everything the user never touched
        std::vector<std::int32_t> cands(targets.begin(), targets.end());
        for (std::int32_t i = 0; i < 25; ++i)
            if (!s.train.rated(u, i) && !s.validation.rated(u, i) && !s.test.rated(u, i))
                cands.push_back(i);
        std::sort(cands.begin(), cands.end(), [&](std::int32_t a, std::int32_t b) {
            const Real sa = score(u, a), sb = score(u, b);
            if (sa != sb) return sa > sb;
            return a < b;
        });
        std::vector<std::int32_t> hit_ranks;
        for (std::size_t pos = 0; pos < cands.size(); ++pos)
            if (std::binary_search(targets.begin(), targets.end(), cands[pos]))
                hit_ranks.push_back(static_cast<std::int32_t>(pos + 1));
        hr3 += static_cast<double>(hit_ratio_at(hit_ranks, targets.size(), 3));
        ndcg5 += static_cast<double>(ndcg_at(hit_ranks, targets.size(), 5));
    }
    hr3 /= users;
    ndcg5 /= users;

    CHECK(r.users_evaluated == users);
    CHECK(r.hr_mean[0] == doctest::Approx(hr3).epsilon(1e-12));
    CHECK(r.ndcg_mean[1] == doctest::Approx(ndcg5).epsilon(1e-12));
    // every repetition saw the identical candidate set
    for (std::int32_t rep = 0; rep < 3; ++rep) {
        CHECK(r.hr[0][static_cast<std::size_t>(rep)] == doctest::Approx(hr3).epsilon(1e-12));
    }
}

TEST_CASE("evaluate is deterministic and seed sensitive") {
    Dataset full = synthesize(SynthConfig{15, 60, 3.0, 0.5, 4, 8, 0.1, 52});
    DataSplit s = split(full, SplitSpec{0.25, 0.1, 5});

    Matrix table(15, 60);
    Rng rng(1);
    for (Real& v : table.flat()) v = rng.normal();
    ScoreFn score = [&table](std::int32_t u, std::int32_t i) {
        return table(static_cast<std::size_t>(u), static_cast<std::size_t>(i));
    };

    EvalConfig cfg;
    cfg.num_sampled_negatives = 20;  // forces real sampling
    cfg.num_repetitions = 4;
    cfg.rng_seed = 77;
    RankingResult a = evaluate(score, s, cfg);
    RankingResult b = evaluate(score, s, cfg);
    CHECK(a == b);

    cfg.rng_seed = 78;
    RankingResult c = evaluate(score, s, cfg);
    CHECK(a.hr_mean != c.hr_mean);  // different negative draws
}

TEST_CASE("metrics are invariant under strictly increasing score transforms") {
    Dataset full = synthesize(SynthConfig{14, 40, 3.0, 0.5, 4, 7, 0.1, 53});
    DataSplit s = split(full, SplitSpec{0.25, 0.1, 6});

    Matrix table(14, 40);
    Rng rng(2);
    for (Real& v : table.flat()) v = rng.normal();
    ScoreFn raw = [&table](std::int32_t u, std::int32_t i) {
        return table(static_cast<std::size_t>(u), static_cast<std::size_t>(i));
    };
    ScoreFn squashed = [&table](std::int32_t u, std::int32_t i) {
        const double x = static_cast<double>(
            table(static_cast<std::size_t>(u), static_cast<std::size_t>(i)));
        return static_cast<Real>(std::tanh(x) * 3 + 10);
    };

    EvalConfig cfg;
    cfg.num_sampled_negatives = 15;
    cfg.num_repetitions = 2;
    cfg.rng_seed = 3;
    RankingResult a = evaluate(raw, s, cfg);
    RankingResult b = evaluate(squashed, s, cfg);
    CHECK(a.hr_mean == b.hr_mean);
    CHECK(a.ndcg_mean == b.ndcg_mean);
    CHECK(a.hit_ranks == b.hit_ranks);
}

TEST_CASE("empty test split evaluates to zero with no users") {
    Dataset full = synthesize(SynthConfig{8, 20, 2.0, 0.5, 4, 4, 0.1, 54});
    DataSplit s = split(full, SplitSpec{0.0, 0.2, 6});
    REQUIRE(s.test.num_interactions == 0);
    EvalConfig cfg;
    cfg.num_repetitions = 2;
    ScoreFn score = [](std::int32_t, std::int32_t) { return Real(0); };
    RankingResult r = evaluate(score, s, cfg);
    CHECK(r.users_evaluated == 0);
    for (Real v : r.hr_mean) CHECK(v == 0);
    for (Real v : r.ndcg_mean) CHECK(v == 0);
}

TEST_CASE("bucket metrics aggregate back to the overall mean") {
    Dataset full = synthesize(SynthConfig{20, 50, 3.0, 0.5, 4, 8, 0.1, 55});
    DataSplit s = split(full, SplitSpec{0.25, 0.1, 7});

    Matrix table(20, 50);
    Rng rng(4);
    for (Real& v : table.flat()) v = rng.normal();
    ScoreFn score = [&table](std::int32_t u, std::int32_t i) {
        return table(static_cast<std::size_t>(u), static_cast<std::size_t>(i));
    };

    EvalConfig cfg;
    cfg.num_sampled_negatives = 30;
    cfg.num_repetitions = 2;
    cfg.rng_seed = 9;
    const std::vector<std::int64_t> bounds{3, 6};
    RankingResult r = evaluate(score, s, cfg, bounds);

    REQUIRE(r.bucket_names.size() == 3);
    std::int32_t total = 0;
    for (std::int32_t c : r.bucket_user_counts) total += c;
    CHECK(total == r.users_evaluated);

    for (std::size_t ni = 0; ni < r.top_n.size(); ++ni) {
        double weighted = 0;
        for (std::size_t b = 0; b < r.bucket_names.size(); ++b)
            weighted += static_cast<double>(r.bucket_hr_mean[b][ni]) *
                        static_cast<double>(r.bucket_user_counts[b]);
        CHECK(weighted / r.users_evaluated ==
              doctest::Approx(static_cast<double>(r.hr_mean[ni])).epsilon(1e-12));
    }
}

TEST_CASE("results tables render stably with per-repetition and mean rows") {
    Dataset full = synthesize(SynthConfig{10, 30, 2.0, 0.5, 4, 5, 0.1, 56});
    DataSplit s = split(full, SplitSpec{0.3, 0.1, 8});
    ScoreFn score = [](std::int32_t u, std::int32_t i) {
        return static_cast<Real>((u * 7 + i * 13) % 23);
    };
    EvalConfig cfg;
    cfg.top_n = {5};
    cfg.num_sampled_negatives = 10;
    cfg.num_repetitions = 2;
    cfg.rng_seed = 10;
    RankingResult r = evaluate(score, s, cfg, std::vector<std::int64_t>{4});

    const std::string t1 = format_results_table(r, "bpr", "deadbeef00000000");
    const std::string t2 = format_results_table(r, "bpr", "deadbeef00000000");
    CHECK(t1 == t2);
    CHECK(t1.find("# config_digest=deadbeef00000000") == 0);
    CHECK(t1.find("# users_evaluated=") != std::string::npos);
    CHECK(t1.find("model\tmetric\tn\tgroup\trepetition\tvalue") != std::string::npos);
    CHECK(t1.find("bpr\thr\t5\toverall\t1\t") != std::string::npos);
    CHECK(t1.find("bpr\thr\t5\toverall\t2\t") != std::string::npos);
    CHECK(t1.find("bpr\thr\t5\toverall\tmean\t") != std::string::npos);
    CHECK(t1.find("bpr\tndcg\t5\t[0,4)\tmean\t") != std::string::npos);
    CHECK(t1.find("[4,∞)") != std::string::npos);
}
