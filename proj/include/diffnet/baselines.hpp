#pragma once

#include "diffnet/dataset.hpp"
#include "diffnet/model.hpp"

namespace diffnet {

// Matrix factorization trained on the same pairwise loss; the score is the
// plain inner product U_a . V_i.
class BprModel final : public RankingModel {
public:
    BprModel(Dataset train, std::int32_t embed_dim, std::uint64_t init_seed);

    std::string kind() const override { return "bpr"; }
    ParamSet& params() override { return params_; }
    const ParamSet& params() const override { return params_; }
    std::vector<std::string> regularized_params() const override { return {"U", "V"}; }

    void refresh() override {}
    Real score(std::int32_t user, std::int32_t item) const override;
    void forward_pairs(std::span<const TrainPair> pairs, std::span<Real> pos_scores,
                       std::span<Real> neg_scores) override;
    void backward_pairs(std::span<const TrainPair> pairs, std::span<const Real> dpos,
                        std::span<const Real> dneg, GradientSet& grads) override;

    const Dataset& train_data() const { return data_; }

private:
    Dataset data_;
    std::int32_t dim_;
    ParamSet params_;
};

// Factorization with implicit feedback: the user vector is augmented by the
// mean of the implicit item factors over the rated history,
//   score(a, i) = V_i . (U_a + (1/|R_a|) sum_{j in R_a} Y_j).
class SvdppModel final : public RankingModel {
public:
    SvdppModel(Dataset train, std::int32_t embed_dim, std::uint64_t init_seed);

    std::string kind() const override { return "svdpp"; }
    ParamSet& params() override { return params_; }
    const ParamSet& params() const override { return params_; }
    std::vector<std::string> regularized_params() const override { return {"U", "V"}; }

    void refresh() override;
    Real score(std::int32_t user, std::int32_t item) const override;
    void forward_pairs(std::span<const TrainPair> pairs, std::span<Real> pos_scores,
                       std::span<Real> neg_scores) override;
    void backward_pairs(std::span<const TrainPair> pairs, std::span<const Real> dpos,
                        std::span<const Real> dneg, GradientSet& grads) override;

    const Dataset& train_data() const { return data_; }

private:
    void rebuild_augmented();

    Dataset data_;
    std::int32_t dim_;
    ParamSet params_;
    Matrix augmented_;  // U_a plus history mean, per user
    bool fresh_ = false;
};

}  // namespace diffnet
