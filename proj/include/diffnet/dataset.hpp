#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffnet/numkernel.hpp"

namespace diffnet {

// Implicit-feedback interactions plus a directed trust graph and optional
// dense per-entity feature matrices. Ids are densified in order of first
// appearance (ratings file first, then trust, then feature files); original
// ids are kept for round-trips. Treat as immutable after construction.
struct Dataset {
    std::int32_t num_users = 0;
    std::int32_t num_items = 0;
    std::vector<std::vector<std::int32_t>> interactions;  // per user, sorted item ids
    std::vector<std::vector<std::int32_t>> trust_out;     // per user, sorted trusted users
    Matrix user_features;  // num_users x d1; empty when the dataset has none
    Matrix item_features;  // num_items x d2
    std::vector<std::string> user_ids;  // dense id -> original id
    std::vector<std::string> item_ids;
    std::size_t num_interactions = 0;

    bool has_user_features() const { return !user_features.empty(); }
    bool has_item_features() const { return !item_features.empty(); }
    std::int32_t user_feature_dim() const {
        return has_user_features() ? static_cast<std::int32_t>(user_features.cols()) : 0;
    }
    std::int32_t item_feature_dim() const {
        return has_item_features() ? static_cast<std::int32_t>(item_features.cols()) : 0;
    }

    std::span<const std::int32_t> items_of(std::int32_t user) const;
    std::span<const std::int32_t> trusted_of(std::int32_t user) const;
    bool rated(std::int32_t user, std::int32_t item) const;  // binary search
    std::size_t total_trust_edges() const;

    std::int32_t find_user(std::string_view original_id) const;  // -1 when unknown
    std::int32_t find_item(std::string_view original_id) const;

    void check_invariants() const;  // throws DataError on violation
};

struct SplitSpec {
    double test_fraction = 0.1;        // of all interactions
    double validation_fraction = 0.09;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct DataSplit {
    Dataset train, validation, test;
};

struct SynthConfig {
    std::int32_t num_users = 100;
    std::int32_t num_items = 200;
    double avg_degree = 8.0;            // mean trust out-degree
    double homophily_strength = 0.5;    // 0 = independent tastes, 1 = pure neighbor mean
    std::int32_t latent_dim = 8;
    std::int32_t positives_per_user = 10;
    double feature_noise = 0.1;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Files are TSV. Ratings: "<user>\t<item>"; trust: "<truster>\t<trustee>"
// (the truster's trusted set gains the trustee). Feature files start with a
// "<dim>\t<count>" header, then "<id>\t<v1>,<v2>,..." rows.
Dataset load_dataset(const std::filesystem::path& ratings_file,
                     const std::filesystem::path& trust_file,
                     const std::optional<std::filesystem::path>& user_features_file = {},
                     const std::optional<std::filesystem::path>& item_features_file = {});

// Writes ratings.tsv, trust.tsv and, when present, user_features.tsv /
// item_features.tsv into dir. load_dataset(save_dataset(d)) == d.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

// Interaction-level random split. |test| = floor(n * test_fraction) and
// |val| = floor(n * validation_fraction) before fallback: a user whose
// training share would be empty keeps all their interactions in train.
DataSplit split(const Dataset& data, const SplitSpec& spec);

// Synthetic dataset with a planted social signal: a preferential-attachment
// trust graph over earlier users, user taste vectors mixed from trusted
// users' by homophily_strength, positives = top scoring items per user, and
// features = taste vectors plus gaussian noise.
Dataset synthesize(const SynthConfig& cfg);

// Bucket index per user by training-positive count; boundaries are strictly
// increasing positive values, bucket b holds counts in [b_{k-1}, b_k).
std::vector<std::int32_t> bucket_users(const Dataset& train,
                                       std::span<const std::int64_t> boundaries);
std::vector<std::string> bucket_labels(std::span<const std::int64_t> boundaries);

// One "<user>\t<item>\t<train|validation|test>" line per interaction.
void save_split_manifest(const DataSplit& split, const std::filesystem::path& file);
DataSplit apply_split_manifest(const Dataset& full, const std::filesystem::path& file);

}  // namespace diffnet
