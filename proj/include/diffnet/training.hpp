#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diffnet/dataset.hpp"
#include "diffnet/model.hpp"

namespace diffnet {

struct TrainConfig {
    Real learning_rate = Real(0.001);
    std::int32_t batch_size = 512;  // pairs per mini-batch; user groups stay whole
    std::int32_t neg_samples_per_pos = 10;
    Real lambda = Real(0.001);  // L2 weight on free embeddings
    std::int32_t max_epochs = 100;
    std::int32_t early_stop_patience = 10;   // epochs without improvement; 0 disables
    std::int32_t val_num_negatives = 1000;   // sampled negatives for epoch validation
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// One pair per (training positive, sampled negative). Negatives are drawn
// uniformly from the user's unrated items by rejection, re-drawn through a
// fresh epoch seed each epoch. Pairs are grouped by user, users ascending.
std::vector<TrainPair> sample_pairs(const Dataset& train, std::uint64_t epoch_seed,
                                    std::int32_t neg_samples_per_pos);

struct BatchRange {
    std::size_t begin = 0, end = 0;  // half-open over the pair array

    friend bool operator==(const BatchRange&, const BatchRange&) = default;
};

// Cuts the pair list at user boundaries so one user's pairs never straddle
// two batches. A single user's block larger than batch_size becomes its own
// oversized batch (with a warning).
std::vector<BatchRange> make_batches(std::span<const TrainPair> pairs, std::int32_t batch_size);

struct PairLoss {
    Real ranking_loss = 0;  // sum over pairs of -ln sigmoid(pos - neg)
    Real reg_loss = 0;      // lambda * sum of squared free-embedding norms
    std::vector<Real> dpos, dneg;  // per-pair gradients of ranking_loss

    Real total() const { return ranking_loss + reg_loss; }
};

PairLoss pairwise_loss(std::span<const Real> pos_scores, std::span<const Real> neg_scores,
                       const ParamSet& params, std::span<const std::string> regularized,
                       Real lambda);

// adds d(reg_loss)/d(param) = 2 * lambda * param onto the named gradients
void add_regularization_gradient(const ParamSet& params,
                                 std::span<const std::string> regularized, Real lambda,
                                 GradientSet& grads);

struct EpochLog {
    std::int32_t epoch = 0;   // 1-based
    Real mean_loss = 0;       // mean per-pair ranking loss over the epoch
    Real val_hr10 = 0;
    Real val_ndcg10 = 0;
};

// "<epoch>\t<mean_loss>\t<val_hr@10>\t<val_ndcg@10>", floats as %.17g
std::string format_epoch_log(const EpochLog& e);

// Early-stopping view: the validation positives move into the test slot (and
// out of the validation slot) so evaluate() ranks exactly them.
DataSplit validation_view(const DataSplit& data);

struct TrainResult {
    std::vector<EpochLog> log;
    std::int32_t best_epoch = 0;  // 0 when validation never ran
    Real best_val_ndcg = Real(-1);
    std::int32_t epochs_completed = 0;
};

// Mini-batch pairwise training with Adam. Validation NDCG@10 drives early
// stopping; the parameters from the best validation epoch are restored at the
// end. A non-finite loss raises TrainAbort carrying a diagnostic dump.
// `adam` may carry resumed optimizer state; `start_epoch` shifts the epoch
// numbering (and the per-epoch sampling streams) for resumed runs.
TrainResult train(RankingModel& model, const DataSplit& data, const TrainConfig& cfg,
                  AdamState* adam = nullptr, std::int32_t start_epoch = 0,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace diffnet
