#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diffnet/numkernel.hpp"

namespace diffnet {

// One pairwise training example: a held positive and a sampled negative.
struct TrainPair {
    std::int32_t user;
    std::int32_t pos_item;
    std::int32_t neg_item;

    friend bool operator==(const TrainPair&, const TrainPair&) = default;
};

// Common surface over the social model and the baselines: named trainable
// tensors, a full refresh for scoring, and a pair-batch forward/backward for
// the ranking loss. score() on a refreshed model is const and thread-safe;
// the training entry points need exclusive access.
class RankingModel {
public:
    virtual ~RankingModel() = default;

    virtual std::string kind() const = 0;

    virtual ParamSet& params() = 0;
    virtual const ParamSet& params() const = 0;

    // names of tensors the loss regularizes (the free embeddings only)
    virtual std::vector<std::string> regularized_params() const = 0;

    // non-trainable tensors persisted in checkpoints (batch-norm statistics)
    virtual ParamSet extra_state() const { return {}; }
    virtual void set_extra_state(const ParamSet&) {}

    // rebuild cached inference state from the current parameters
    virtual void refresh() = 0;

    // preference score; call refresh() after any parameter change
    virtual Real score(std::int32_t user, std::int32_t item) const = 0;

    // Training-path scores for a batch of pairs; retains whatever the
    // backward pass needs. The retained state is consumed by backward_pairs
    // and invalidated by any other forward or refresh.
    virtual void forward_pairs(std::span<const TrainPair> pairs, std::span<Real> pos_scores,
                               std::span<Real> neg_scores) = 0;

    // Accumulates parameter gradients for the batch last given to
    // forward_pairs, weighted by the per-pair score gradients.
    virtual void backward_pairs(std::span<const TrainPair> pairs, std::span<const Real> dpos,
                                std::span<const Real> dneg, GradientSet& grads) = 0;
};

}  // namespace diffnet
