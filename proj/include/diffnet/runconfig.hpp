#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "diffnet/dataset.hpp"
#include "diffnet/diffnet_model.hpp"
#include "diffnet/eval.hpp"
#include "diffnet/training.hpp"

namespace diffnet {

// Flat "key = value" run configuration. Every field has a working default;
// unknown keys are rejected. Sub-component seeds are derived from `seed`, so
// one value pins the whole run.
struct RunConfig {
    std::string model = "diffnet";  // diffnet | bpr | svdpp
    std::uint64_t seed = 42;

    // data source: file paths, or a synthetic dataset when ratings_path is empty
    std::string ratings_path, trust_path, user_features_path, item_features_path;
    std::int32_t synth_users = 100;
    std::int32_t synth_items = 200;
    double synth_avg_degree = 8.0;
    double synth_homophily = 0.5;
    std::int32_t synth_latent_dim = 8;
    std::int32_t synth_positives_per_user = 10;
    double synth_feature_noise = 0.1;

    double test_fraction = 0.1;
    double validation_fraction = 0.09;

    std::int32_t embed_dim = 64;
    std::int32_t depth = 2;
    std::string pooling = "average";
    std::string fusion_activation = "sigmoid";
    std::string diffusion_activation = "relu";
    std::string use_user_features = "auto";  // auto = use when the dataset has them
    std::string use_item_features = "auto";
    bool use_free_user_embed = true;
    bool use_free_item_embed = true;
    bool use_batchnorm = true;
    std::string empty_neighbor_policy = "zero_vector";
    bool exclude_target_item = false;

    double learning_rate = 0.001;
    std::int32_t batch_size = 512;
    std::int32_t neg_samples_per_pos = 10;
    double lambda = 0.001;
    std::int32_t max_epochs = 100;
    std::int32_t early_stop_patience = 10;
    std::int32_t val_num_negatives = 1000;

    std::vector<std::int32_t> top_n = {5, 10, 15};
    std::int32_t num_sampled_negatives = 1000;
    std::int32_t num_repetitions = 10;
    std::vector<std::int64_t> bucket_boundaries = {16, 64, 256};

    std::string out_dir = "run_out";
    std::string resume_from;

    std::vector<std::int32_t> ablate_depths = {0, 1, 2, 3};
    std::vector<std::string> ablate_variants = {"full", "x0", "y0", "xy0", "p0", "q0"};

    void validate() const;  // throws ConfigError naming the offending key
};

// "key = value" lines; '#' comments and blank lines skipped; later duplicate
// keys win. source_name appears in error messages.
std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& source_name);

RunConfig run_config_from_kv(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> run_config_to_kv(const RunConfig& cfg);

// every key, sorted, as "key = value" lines; floats printed round-trip exact
std::string canonical_config_text(const RunConfig& cfg);
std::string config_digest_hex(const RunConfig& cfg);  // fnv-1a of the canonical text

SynthConfig make_synth_config(const RunConfig& cfg);
SplitSpec make_split_spec(const RunConfig& cfg);
TrainConfig make_train_config(const RunConfig& cfg);
EvalConfig make_eval_config(const RunConfig& cfg);

Dataset load_or_synthesize(const RunConfig& cfg);

// resolves the auto feature flags against what the dataset provides
DiffNetConfig resolve_net_config(const RunConfig& cfg, const Dataset& data);

}  // namespace diffnet
