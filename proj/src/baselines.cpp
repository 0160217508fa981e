#include "diffnet/baselines.hpp"

#include <cmath>

#include "diffnet/rng.hpp"

namespace diffnet {

namespace {

std::size_t idx(std::int32_t i) { return static_cast<std::size_t>(i); }

void init_uniform(ParamSet& params, std::int32_t embed_dim, std::uint64_t seed) {
    Rng rng(seed);
    const Real bound = Real(0.1) / std::sqrt(static_cast<Real>(embed_dim));
    for (auto& e : params)
        for (Real& x : e.value.flat()) x = static_cast<Real>(rng.uniform(-bound, bound));
}

}  // namespace

// ---------------------------------------------------------------------------
// BprModel

BprModel::BprModel(Dataset train, std::int32_t embed_dim, std::uint64_t init_seed)
    : data_(std::move(train)), dim_(embed_dim) {
    if (embed_dim < 1) throw ConfigError("embed_dim: must be at least 1");
    data_.check_invariants();
    params_.add("U", Matrix(idx(data_.num_users), idx(dim_)));
    params_.add("V", Matrix(idx(data_.num_items), idx(dim_)));
    init_uniform(params_, dim_, init_seed);
}

Real BprModel::score(std::int32_t user, std::int32_t item) const {
    return dot(params_.at("U").row(idx(user)), params_.at("V").row(idx(item)));
}

void BprModel::forward_pairs(std::span<const TrainPair> pairs, std::span<Real> pos_scores,
                             std::span<Real> neg_scores) {
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        pos_scores[p] = score(pairs[p].user, pairs[p].pos_item);
        neg_scores[p] = score(pairs[p].user, pairs[p].neg_item);
    }
}

void BprModel::backward_pairs(std::span<const TrainPair> pairs, std::span<const Real> dpos,
                              std::span<const Real> dneg, GradientSet& grads) {
    if (grads.empty()) grads = params_.zeros_like();
    const Matrix& u = params_.at("U");
    const Matrix& v = params_.at("V");
    Matrix& du = grads.at("U");
    Matrix& dv = grads.at("V");
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto a = idx(pairs[p].user);
        const auto i = idx(pairs[p].pos_item);
        const auto j = idx(pairs[p].neg_item);
        axpy(dpos[p], v.row(i), du.row(a));
        axpy(dpos[p], u.row(a), dv.row(i));
        axpy(dneg[p], v.row(j), du.row(a));
        axpy(dneg[p], u.row(a), dv.row(j));
    }
}

// ---------------------------------------------------------------------------
// SvdppModel

SvdppModel::SvdppModel(Dataset train, std::int32_t embed_dim, std::uint64_t init_seed)
    : data_(std::move(train)), dim_(embed_dim) {
    if (embed_dim < 1) throw ConfigError("embed_dim: must be at least 1");
    data_.check_invariants();
    params_.add("U", Matrix(idx(data_.num_users), idx(dim_)));
    params_.add("V", Matrix(idx(data_.num_items), idx(dim_)));
    params_.add("Yimp", Matrix(idx(data_.num_items), idx(dim_)));
    init_uniform(params_, dim_, init_seed);
}

void SvdppModel::rebuild_augmented() {
    const Matrix& u = params_.at("U");
    const Matrix& y = params_.at("Yimp");
    augmented_ = u;
    for (std::int32_t a = 0; a < data_.num_users; ++a) {
        auto items = data_.items_of(a);
        if (items.empty()) continue;
        const Real inv = Real(1) / static_cast<Real>(items.size());
        auto row = augmented_.row(idx(a));
        for (std::int32_t j : items) axpy(inv, y.row(idx(j)), row);
    }
    fresh_ = true;
}

void SvdppModel::refresh() { rebuild_augmented(); }

Real SvdppModel::score(std::int32_t user, std::int32_t item) const {
    if (!fresh_) throw Error("SvdppModel::score: refresh() has not been called");
    return dot(params_.at("V").row(idx(item)), augmented_.row(idx(user)));
}

void SvdppModel::forward_pairs(std::span<const TrainPair> pairs, std::span<Real> pos_scores,
                               std::span<Real> neg_scores) {
    rebuild_augmented();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        pos_scores[p] = score(pairs[p].user, pairs[p].pos_item);
        neg_scores[p] = score(pairs[p].user, pairs[p].neg_item);
    }
}

void SvdppModel::backward_pairs(std::span<const TrainPair> pairs, std::span<const Real> dpos,
                                std::span<const Real> dneg, GradientSet& grads) {
    if (!fresh_) throw Error("SvdppModel::backward_pairs: no matching forward");
    if (grads.empty()) grads = params_.zeros_like();
    const Matrix& v = params_.at("V");
    Matrix& du = grads.at("U");
    Matrix& dv = grads.at("V");
    Matrix& dy = grads.at("Yimp");

    auto pull = [&](std::int32_t user, std::int32_t item, Real g) {
        if (g == Real(0)) return;
        const auto a = idx(user);
        const auto i = idx(item);
        axpy(g, v.row(i), du.row(a));
        axpy(g, augmented_.row(a), dv.row(i));
        auto items = data_.items_of(user);
        if (items.empty()) return;
        const Real coef = g / static_cast<Real>(items.size());
        for (std::int32_t j : items) axpy(coef, v.row(i), dy.row(idx(j)));
    };

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        pull(pairs[p].user, pairs[p].pos_item, dpos[p]);
        pull(pairs[p].user, pairs[p].neg_item, dneg[p]);
    }
}

}  // namespace diffnet
