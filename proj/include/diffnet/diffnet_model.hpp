#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "diffnet/dataset.hpp"
#include "diffnet/model.hpp"

namespace diffnet {

enum class Pooling { average, max };
enum class EmptyNeighborPolicy { zero_vector, self_copy };

Pooling pooling_from_string(std::string_view name);
std::string_view to_string(Pooling p);
EmptyNeighborPolicy neighbor_policy_from_string(std::string_view name);
std::string_view to_string(EmptyNeighborPolicy p);

struct DiffNetConfig {
    std::int32_t embed_dim = 64;  // D
    std::int32_t depth = 2;       // diffusion layers K
    Pooling pooling = Pooling::average;
    Activation fusion_activation = Activation::sigmoid;
    // per-layer; empty means relu everywhere, otherwise size must equal depth
    std::vector<Activation> diffusion_activations;
    bool use_user_features = true;
    bool use_item_features = true;
    bool use_free_user_embed = true;
    bool use_free_item_embed = true;
    bool use_batchnorm = true;  // applied to diffusion-layer outputs
    EmptyNeighborPolicy empty_neighbor_policy = EmptyNeighborPolicy::zero_vector;
    // during training, drop the scored positive from its own history mean
    bool exclude_target_item = false;

    Activation diffusion_activation(std::int32_t layer) const;
    void validate() const;

    friend bool operator==(const DiffNetConfig&, const DiffNetConfig&) = default;
};

struct ForwardTrace {
    std::vector<Matrix> h;      // depth+1 user embedding stages, each M x D
    std::vector<Matrix> h_agg;  // depth neighbor aggregates feeding each layer
    std::vector<Matrix> act_out;  // depth post-activation outputs (before batch norm)
    std::vector<std::vector<std::int32_t>> argmax;  // max-pooling provenance, M*D per layer
    std::vector<BatchNormTrace> bn;
    Matrix v;     // N x D fused item vectors
    Matrix hist;  // M x D mean item vector over training positives
    Matrix u;     // M x D final user vectors
    std::size_t neighbor_accumulations = 0;  // one per (user, trusted user, layer)
    bool training = false;
    bool valid = false;
};

// Pooled aggregation of trusted users' stage-k embeddings. With max pooling,
// argmax_out (length D) records the contributing user per coordinate.
// Returns the number of neighbor rows accumulated.
std::size_t aggregate_neighbors(const Matrix& h, std::span<const std::int32_t> trusted,
                                Pooling pooling, EmptyNeighborPolicy policy, std::int32_t self,
                                std::span<Real> out, std::int32_t* argmax_out = nullptr);

// u_a = h_a + mean of v over the user's training positives (empty mean is 0)
void final_user_vector(std::span<const Real> h_user, const Matrix& v,
                       std::span<const std::int32_t> positives, std::span<Real> out);

// Social recommender: fused user/item inputs, `depth` rounds of influence
// diffusion along the trust graph, then inner-product scoring against the
// item vector plus the user's rated-history mean. Items do not diffuse.
class DiffNetModel final : public RankingModel {
public:
    // the model keeps its own copy of the training split
    DiffNetModel(Dataset train, DiffNetConfig config, std::uint64_t init_seed);

    std::string kind() const override { return "diffnet"; }
    ParamSet& params() override { return params_; }
    const ParamSet& params() const override { return params_; }
    std::vector<std::string> regularized_params() const override;
    ParamSet extra_state() const override;
    void set_extra_state(const ParamSet& state) override;

    void refresh() override;
    Real score(std::int32_t user, std::int32_t item) const override;
    void forward_pairs(std::span<const TrainPair> pairs, std::span<Real> pos_scores,
                       std::span<Real> neg_scores) override;
    void backward_pairs(std::span<const TrainPair> pairs, std::span<const Real> dpos,
                        std::span<const Real> dneg, GradientSet& grads) override;

    // stage-0 embeddings (feature/embedding fusion)
    void fuse_user(std::int32_t user, std::span<Real> out) const;
    void fuse_item(std::int32_t item, std::span<Real> out) const;

    // full forward over all users and items; the trace stays valid until the
    // next forward call or parameter change
    const ForwardTrace& forward(bool training);
    const ForwardTrace& trace() const { return trace_; }

    const DiffNetConfig& config() const { return cfg_; }
    const Dataset& train_data() const { return data_; }

private:
    void init_params(std::uint64_t seed);
    Real pair_score(const ForwardTrace& t, std::int32_t user, std::int32_t item,
                    bool exclude_from_history) const;

    Dataset data_;
    DiffNetConfig cfg_;
    ParamSet params_;
    std::vector<BatchNormState> bn_;
    ForwardTrace trace_;
};

}  // namespace diffnet
