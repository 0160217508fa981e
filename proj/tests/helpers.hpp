#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "diffnet/dataset.hpp"
#include "diffnet/numkernel.hpp"
#include "diffnet/rng.hpp"

namespace testutil {

// Random dataset with optional features; every structural edge case
// (userless items, itemless users, empty trust sets) stays reachable.
inline diffnet::Dataset random_dataset(std::int32_t num_users, std::int32_t num_items,
                                       double rating_prob, double trust_prob,
                                       std::int32_t user_feat_dim, std::int32_t item_feat_dim,
                                       std::uint64_t seed) {
    diffnet::Dataset d;
    d.num_users = num_users;
    d.num_items = num_items;
    d.interactions.resize(static_cast<std::size_t>(num_users));
    d.trust_out.resize(static_cast<std::size_t>(num_users));
    diffnet::Rng rng(seed);
    for (std::int32_t u = 0; u < num_users; ++u) {
        for (std::int32_t i = 0; i < num_items; ++i)
            if (rng.uniform() < rating_prob)
                d.interactions[static_cast<std::size_t>(u)].push_back(i);
        for (std::int32_t b = 0; b < num_users; ++b)
            if (b != u && rng.uniform() < trust_prob)
                d.trust_out[static_cast<std::size_t>(u)].push_back(b);
        d.num_interactions += d.interactions[static_cast<std::size_t>(u)].size();
    }
    if (user_feat_dim > 0) {
        d.user_features = diffnet::Matrix(static_cast<std::size_t>(num_users),
                                          static_cast<std::size_t>(user_feat_dim));
        for (diffnet::Real& v : d.user_features.flat()) v = rng.normal();
    }
    if (item_feat_dim > 0) {
        d.item_features = diffnet::Matrix(static_cast<std::size_t>(num_items),
                                          static_cast<std::size_t>(item_feat_dim));
        for (diffnet::Real& v : d.item_features.flat()) v = rng.normal();
    }
    for (std::int32_t u = 0; u < num_users; ++u) d.user_ids.push_back(std::to_string(u));
    for (std::int32_t i = 0; i < num_items; ++i) d.item_ids.push_back(std::to_string(i));
    d.check_invariants();
    return d;
}

// Fresh directory under the system temp root, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("diffnet_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
    const double diff = std::abs(a - b);
    if (diff <= abs_floor) return true;
    return diff <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace testutil
