#include "diffnet/diffnet_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffnet/log.hpp"
#include "diffnet/rng.hpp"

namespace diffnet {

namespace {

std::size_t idx(std::int32_t i) { return static_cast<std::size_t>(i); }

bool row_all_zero(std::span<const Real> row) {
    for (Real x : row)
        if (x != Real(0)) return false;
    return true;
}

void copy_row(std::span<const Real> src, std::span<Real> dst) {
    std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

Pooling pooling_from_string(std::string_view name) {
    if (name == "average") return Pooling::average;
    if (name == "max") return Pooling::max;
    throw ConfigError("unknown pooling '" + std::string(name) + "' (expected average or max)");
}

std::string_view to_string(Pooling p) {
    return p == Pooling::average ? "average" : "max";
}

EmptyNeighborPolicy neighbor_policy_from_string(std::string_view name) {
    if (name == "zero_vector") return EmptyNeighborPolicy::zero_vector;
    if (name == "self_copy") return EmptyNeighborPolicy::self_copy;
    throw ConfigError("unknown empty_neighbor_policy '" + std::string(name) +
                      "' (expected zero_vector or self_copy)");
}

std::string_view to_string(EmptyNeighborPolicy p) {
    return p == EmptyNeighborPolicy::zero_vector ? "zero_vector" : "self_copy";
}

Activation DiffNetConfig::diffusion_activation(std::int32_t layer) const {
    if (diffusion_activations.empty()) return Activation::relu;
    return diffusion_activations[idx(layer)];
}

void DiffNetConfig::validate() const {
    if (embed_dim < 1) throw ConfigError("embed_dim: must be at least 1");
    if (depth < 0) throw ConfigError("depth: must be non-negative");
    if (!diffusion_activations.empty() &&
        diffusion_activations.size() != static_cast<std::size_t>(depth))
        throw ConfigError("diffusion_activation: need one entry per layer or a single one");
    if (!use_user_features && !use_free_user_embed)
        throw ConfigError("use_user_features/use_free_user_embed: both disabled leaves users "
                          "without any input");
    if (!use_item_features && !use_free_item_embed)
        throw ConfigError("use_item_features/use_free_item_embed: both disabled leaves items "
                          "without any input");
}

// ---------------------------------------------------------------------------
// free helpers

std::size_t aggregate_neighbors(const Matrix& h, std::span<const std::int32_t> trusted,
                                Pooling pooling, EmptyNeighborPolicy policy, std::int32_t self,
                                std::span<Real> out, std::int32_t* argmax_out) {
    const std::size_t d = h.cols();
    if (trusted.empty()) {
        if (policy == EmptyNeighborPolicy::self_copy) {
            copy_row(h.row(idx(self)), out);
            if (argmax_out)
                for (std::size_t c = 0; c < d; ++c) argmax_out[c] = self;
        } else {
            std::fill(out.begin(), out.end(), Real(0));
            if (argmax_out)
                for (std::size_t c = 0; c < d; ++c) argmax_out[c] = -1;
        }
        return 0;
    }

    if (pooling == Pooling::average) {
        std::fill(out.begin(), out.end(), Real(0));
        for (std::int32_t b : trusted) axpy(Real(1), h.row(idx(b)), out);
        const Real inv = Real(1) / static_cast<Real>(trusted.size());
        for (Real& x : out) x *= inv;
    } else {
        copy_row(h.row(idx(trusted[0])), out);
        if (argmax_out)
            for (std::size_t c = 0; c < d; ++c) argmax_out[c] = trusted[0];
        for (std::size_t k = 1; k < trusted.size(); ++k) {
            auto row = h.row(idx(trusted[k]));
            for (std::size_t c = 0; c < d; ++c) {
                if (row[c] > out[c]) {
                    out[c] = row[c];
                    if (argmax_out) argmax_out[c] = trusted[k];
                }
            }
        }
    }
    return trusted.size();
}

void final_user_vector(std::span<const Real> h_user, const Matrix& v,
                       std::span<const std::int32_t> positives, std::span<Real> out) {
    copy_row(h_user, out);
    if (positives.empty()) return;
    const Real inv = Real(1) / static_cast<Real>(positives.size());
    for (std::int32_t i : positives) axpy(inv, v.row(idx(i)), out);
}

// ---------------------------------------------------------------------------
// construction

DiffNetModel::DiffNetModel(Dataset train, DiffNetConfig config, std::uint64_t init_seed)
    : data_(std::move(train)), cfg_(std::move(config)) {
    cfg_.validate();
    data_.check_invariants();
    if (cfg_.use_user_features && !data_.has_user_features())
        throw ConfigError("use_user_features: dataset has no user features");
    if (cfg_.use_item_features && !data_.has_item_features())
        throw ConfigError("use_item_features: dataset has no item features");

    const auto m = idx(data_.num_users);
    const auto n = idx(data_.num_items);
    const auto d = idx(cfg_.embed_dim);

    if (cfg_.use_free_user_embed) params_.add("P", Matrix(m, d));
    if (cfg_.use_free_item_embed) params_.add("Q", Matrix(n, d));
    if (cfg_.use_user_features) {
        std::size_t in = idx(data_.user_feature_dim()) + (cfg_.use_free_user_embed ? d : 0);
        params_.add("fuse_user.W", Matrix(d, in));
        params_.add("fuse_user.b", Matrix(1, d));
    }
    if (cfg_.use_item_features) {
        std::size_t in = (cfg_.use_free_item_embed ? d : 0) + idx(data_.item_feature_dim());
        params_.add("fuse_item.W", Matrix(d, in));
        params_.add("fuse_item.b", Matrix(1, d));
    }
    for (std::int32_t k = 0; k < cfg_.depth; ++k) {
        const std::string tag = "diffuse" + std::to_string(k);
        params_.add(tag + ".W", Matrix(d, 2 * d));
        params_.add(tag + ".b", Matrix(1, d));
        if (cfg_.use_batchnorm) {
            params_.add("bn" + std::to_string(k) + ".scale", Matrix(1, d));
            params_.add("bn" + std::to_string(k) + ".shift", Matrix(1, d));
            bn_.emplace_back(d);
        }
    }

    init_params(init_seed);
}

void DiffNetModel::init_params(std::uint64_t seed) {
    Rng rng(seed);
    const Real bound = Real(0.1) / std::sqrt(static_cast<Real>(cfg_.embed_dim));
    for (auto& e : params_) {
        if (e.name.ends_with(".scale")) {
            e.value.fill(Real(1));
        } else if (e.name.ends_with(".shift")) {
            e.value.fill(Real(0));
        } else {
            for (Real& x : e.value.flat())
                x = static_cast<Real>(rng.uniform(-bound, bound));
        }
    }
}

std::vector<std::string> DiffNetModel::regularized_params() const {
    std::vector<std::string> names;
    if (cfg_.use_free_user_embed) names.push_back("P");
    if (cfg_.use_free_item_embed) names.push_back("Q");
    return names;
}

ParamSet DiffNetModel::extra_state() const {
    ParamSet state;
    for (std::size_t k = 0; k < bn_.size(); ++k) {
        const std::string tag = "bn" + std::to_string(k);
        const auto d = idx(cfg_.embed_dim);
        Matrix mean(1, d), var(1, d);
        for (std::size_t c = 0; c < d; ++c) {
            mean(0, c) = bn_[k].running_mean[c];
            var(0, c) = bn_[k].running_var[c];
        }
        state.add(tag + ".running_mean", std::move(mean));
        state.add(tag + ".running_var", std::move(var));
    }
    return state;
}

void DiffNetModel::set_extra_state(const ParamSet& state) {
    for (std::size_t k = 0; k < bn_.size(); ++k) {
        const std::string tag = "bn" + std::to_string(k);
        const Matrix& mean = state.at(tag + ".running_mean");
        const Matrix& var = state.at(tag + ".running_var");
        if (mean.cols() != bn_[k].running_mean.size() ||
            var.cols() != bn_[k].running_var.size())
            throw DimError("set_extra_state: batch-norm statistic width mismatch");
        for (std::size_t c = 0; c < mean.cols(); ++c) {
            bn_[k].running_mean[c] = mean(0, c);
            bn_[k].running_var[c] = var(0, c);
        }
    }
    trace_.valid = false;
}

// ---------------------------------------------------------------------------
// forward

void DiffNetModel::fuse_user(std::int32_t user, std::span<Real> out) const {
    if (!cfg_.use_user_features) {
        copy_row(params_.at("P").row(idx(user)), out);
        return;
    }
    const Matrix& w = params_.at("fuse_user.W");
    std::vector<Real> in(w.cols());
    auto x = data_.user_features.row(idx(user));
    std::copy(x.begin(), x.end(), in.begin());
    if (cfg_.use_free_user_embed) {
        auto p = params_.at("P").row(idx(user));
        std::copy(p.begin(), p.end(), in.begin() + x.size());
    }
    affine(w, in, params_.at("fuse_user.b").row(0), out);
    activate_inplace(cfg_.fusion_activation, out);
}

void DiffNetModel::fuse_item(std::int32_t item, std::span<Real> out) const {
    if (!cfg_.use_item_features) {
        copy_row(params_.at("Q").row(idx(item)), out);
        return;
    }
    const Matrix& w = params_.at("fuse_item.W");
    std::vector<Real> in(w.cols());
    std::size_t off = 0;
    if (cfg_.use_free_item_embed) {
        auto q = params_.at("Q").row(idx(item));
        std::copy(q.begin(), q.end(), in.begin());
        off = q.size();
    }
    auto y = data_.item_features.row(idx(item));
    std::copy(y.begin(), y.end(), in.begin() + off);
    affine(w, in, params_.at("fuse_item.b").row(0), out);
    activate_inplace(cfg_.fusion_activation, out);
}

const ForwardTrace& DiffNetModel::forward(bool training) {
    const auto m = idx(data_.num_users);
    const auto n = idx(data_.num_items);
    const auto d = idx(cfg_.embed_dim);
    const auto depth = static_cast<std::size_t>(cfg_.depth);

    ForwardTrace& t = trace_;
    t.valid = false;
    t.training = training;
    t.neighbor_accumulations = 0;

    t.v = Matrix(n, d);
    for (std::int32_t i = 0; i < data_.num_items; ++i) fuse_item(i, t.v.row(idx(i)));

    t.h.assign(depth + 1, Matrix());
    t.h_agg.assign(depth, Matrix());
    t.act_out.assign(depth, Matrix());
    t.argmax.assign(depth, {});
    t.bn.assign(cfg_.use_batchnorm ? depth : 0, BatchNormTrace());

    t.h[0] = Matrix(m, d);
    for (std::int32_t a = 0; a < data_.num_users; ++a) fuse_user(a, t.h[0].row(idx(a)));

    std::vector<Real> layer_in(2 * d);
    for (std::size_t k = 0; k < depth; ++k) {
        const std::string tag = "diffuse" + std::to_string(k);
        const Matrix& w = params_.at(tag + ".W");
        auto bias = params_.at(tag + ".b").row(0);
        const Activation act = cfg_.diffusion_activation(static_cast<std::int32_t>(k));

        t.h_agg[k] = Matrix(m, d);
        if (cfg_.pooling == Pooling::max) t.argmax[k].assign(m * d, -1);
        Matrix next(m, d);
        for (std::size_t a = 0; a < m; ++a) {
            auto agg = t.h_agg[k].row(a);
            std::int32_t* amax =
                cfg_.pooling == Pooling::max ? t.argmax[k].data() + a * d : nullptr;
            t.neighbor_accumulations += aggregate_neighbors(
                t.h[k], data_.trusted_of(static_cast<std::int32_t>(a)), cfg_.pooling,
                cfg_.empty_neighbor_policy, static_cast<std::int32_t>(a), agg, amax);
            std::copy(agg.begin(), agg.end(), layer_in.begin());
            auto self = t.h[k].row(a);
            std::copy(self.begin(), self.end(), layer_in.begin() + d);
            affine(w, layer_in, bias, next.row(a));
            activate_inplace(act, next.row(a));
        }

        if (cfg_.use_batchnorm) {
            t.act_out[k] = next;
            BatchNormState& state = bn_[k];
            state.training = training;
            t.h[k + 1] = batchnorm_apply(state, params_.at("bn" + std::to_string(k) + ".scale").row(0),
                                         params_.at("bn" + std::to_string(k) + ".shift").row(0),
                                         t.act_out[k], &t.bn[k]);
        } else {
            t.act_out[k] = next;
            t.h[k + 1] = std::move(next);
        }
    }

    t.hist = Matrix(m, d);
    t.u = Matrix(m, d);
    for (std::int32_t a = 0; a < data_.num_users; ++a) {
        auto items = data_.items_of(a);
        if (!items.empty()) {
            auto hrow = t.hist.row(idx(a));
            const Real inv = Real(1) / static_cast<Real>(items.size());
            for (std::int32_t i : items) axpy(inv, t.v.row(idx(i)), hrow);
        }
        copy_row(t.h[depth].row(idx(a)), t.u.row(idx(a)));
        axpy(Real(1), t.hist.row(idx(a)), t.u.row(idx(a)));
    }

    t.valid = true;
    return t;
}

void DiffNetModel::refresh() { forward(false); }

Real DiffNetModel::score(std::int32_t user, std::int32_t item) const {
    if (!trace_.valid) throw Error("DiffNetModel::score: refresh() has not been called");
    return dot(trace_.v.row(idx(item)), trace_.u.row(idx(user)));
}

Real DiffNetModel::pair_score(const ForwardTrace& t, std::int32_t user, std::int32_t item,
                              bool exclude_from_history) const {
    if (!exclude_from_history || !data_.rated(user, item))
        return dot(t.v.row(idx(item)), t.u.row(idx(user)));

    const auto n = static_cast<Real>(data_.items_of(user).size());
    const auto d = t.v.cols();
    std::vector<Real> u_ex(d);
    copy_row(t.h[t.h.size() - 1].row(idx(user)), u_ex);
    if (n >= 2) {
        // history mean without the target: (sum - v_i) / (n - 1)
        auto hrow = t.hist.row(idx(user));
        auto vrow = t.v.row(idx(item));
        const Real inv = Real(1) / (n - Real(1));
        for (std::size_t c = 0; c < d; ++c) u_ex[c] += (hrow[c] * n - vrow[c]) * inv;
    }
    return dot(t.v.row(idx(item)), u_ex);
}

void DiffNetModel::forward_pairs(std::span<const TrainPair> pairs, std::span<Real> pos_scores,
                                 std::span<Real> neg_scores) {
    forward(true);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        pos_scores[p] = pair_score(trace_, pairs[p].user, pairs[p].pos_item,
                                   cfg_.exclude_target_item);
        neg_scores[p] = dot(trace_.v.row(idx(pairs[p].neg_item)),
                            trace_.u.row(idx(pairs[p].user)));
    }
}

// ---------------------------------------------------------------------------
// backward

void DiffNetModel::backward_pairs(std::span<const TrainPair> pairs, std::span<const Real> dpos,
                                  std::span<const Real> dneg, GradientSet& grads) {
    if (!trace_.valid || !trace_.training)
        throw Error("DiffNetModel::backward_pairs: no matching training forward");
    if (grads.empty()) grads = params_.zeros_like();

    const ForwardTrace& t = trace_;
    const auto m = idx(data_.num_users);
    const auto d = idx(cfg_.embed_dim);
    const auto depth = static_cast<std::size_t>(cfg_.depth);

    Matrix du(m, d);        // through the shared final user vector
    Matrix dh(m, d);        // direct gradient on the deepest user stage
    Matrix dv(t.v.rows(), d);
    std::vector<Real> u_ex(d);

    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto a = idx(pairs[p].user);
        const auto i = idx(pairs[p].pos_item);
        const auto j = idx(pairs[p].neg_item);
        const Real gp = dpos[p], gn = dneg[p];

        if (gn != Real(0)) {
            axpy(gn, t.u.row(a), dv.row(j));
            axpy(gn, t.v.row(j), du.row(a));
        }
        if (gp == Real(0)) continue;

        if (cfg_.exclude_target_item && data_.rated(pairs[p].user, pairs[p].pos_item)) {
            const auto items = data_.items_of(pairs[p].user);
            const auto n = static_cast<Real>(items.size());
            copy_row(t.h[depth].row(a), u_ex);
            if (n >= 2) {
                const Real inv = Real(1) / (n - Real(1));
                auto hrow = t.hist.row(a);
                auto vrow = t.v.row(i);
                for (std::size_t c = 0; c < d; ++c) u_ex[c] += (hrow[c] * n - vrow[c]) * inv;
                // the target's own coefficient inside the reduced mean cancels
                const Real coef = gp * inv;
                for (std::int32_t other : items)
                    if (idx(other) != i) axpy(coef, t.v.row(i), dv.row(idx(other)));
            }
            axpy(gp, u_ex, dv.row(i));
            axpy(gp, t.v.row(i), dh.row(a));
        } else {
            axpy(gp, t.u.row(a), dv.row(i));
            axpy(gp, t.v.row(i), du.row(a));
        }
    }

    // u_a = h_a + mean of rated item vectors: fan du out to both inputs
    for (std::size_t a = 0; a < m; ++a) {
        auto row = du.row(a);
        if (row_all_zero(row)) continue;
        axpy(Real(1), row, dh.row(a));
        auto items = data_.items_of(static_cast<std::int32_t>(a));
        if (items.empty()) continue;
        const Real inv = Real(1) / static_cast<Real>(items.size());
        for (std::int32_t i : items) axpy(inv, row, dv.row(idx(i)));
    }

    // diffusion layers, deepest first
    std::vector<Real> dz(d), dinput(2 * d), layer_in(2 * d);
    for (std::size_t k = depth; k-- > 0;) {
        const std::string tag = "diffuse" + std::to_string(k);
        const Matrix& w = params_.at(tag + ".W");
        Matrix& dw = grads.at(tag + ".W");
        auto dbias = grads.at(tag + ".b").row(0);
        const Activation act = cfg_.diffusion_activation(static_cast<std::int32_t>(k));

        Matrix dact;
        if (cfg_.use_batchnorm) {
            const std::string bntag = "bn" + std::to_string(k);
            dact = batchnorm_backward(t.bn[k], params_.at(bntag + ".scale").row(0), dh,
                                      grads.at(bntag + ".scale").row(0),
                                      grads.at(bntag + ".shift").row(0));
        } else {
            dact = std::move(dh);
        }

        Matrix dprev(m, d);
        for (std::size_t a = 0; a < m; ++a) {
            auto drow = dact.row(a);
            if (row_all_zero(drow)) continue;
            copy_row(drow, dz);
            scale_by_activation_grad(act, t.act_out[k].row(a), dz);
            if (row_all_zero(dz)) continue;

            axpy(Real(1), dz, dbias);
            auto agg = t.h_agg[k].row(a);
            std::copy(agg.begin(), agg.end(), layer_in.begin());
            auto self = t.h[k].row(a);
            std::copy(self.begin(), self.end(), layer_in.begin() + d);
            outer_acc(dw, dz, layer_in);

            std::fill(dinput.begin(), dinput.end(), Real(0));
            matvec_transpose_acc(w, dz, dinput);
            std::span<const Real> dagg(dinput.data(), d);
            std::span<const Real> dself(dinput.data() + d, d);
            axpy(Real(1), dself, dprev.row(a));

            auto trusted = data_.trusted_of(static_cast<std::int32_t>(a));
            if (trusted.empty()) {
                if (cfg_.empty_neighbor_policy == EmptyNeighborPolicy::self_copy)
                    axpy(Real(1), dagg, dprev.row(a));
            } else if (cfg_.pooling == Pooling::average) {
                const Real inv = Real(1) / static_cast<Real>(trusted.size());
                for (std::int32_t b : trusted) axpy(inv, dagg, dprev.row(idx(b)));
            } else {
                const std::int32_t* amax = t.argmax[k].data() + a * d;
                for (std::size_t c = 0; c < d; ++c)
                    if (amax[c] >= 0) dprev(idx(amax[c]), c) += dagg[c];
            }
        }
        dh = std::move(dprev);
    }

    // user fusion
    if (cfg_.use_user_features) {
        const Matrix& w = params_.at("fuse_user.W");
        Matrix& dw = grads.at("fuse_user.W");
        auto dbias = grads.at("fuse_user.b").row(0);
        Matrix* dp = cfg_.use_free_user_embed ? &grads.at("P") : nullptr;
        const Matrix* pmat = cfg_.use_free_user_embed ? &params_.at("P") : nullptr;
        std::vector<Real> in(w.cols()), din(w.cols());
        for (std::size_t a = 0; a < m; ++a) {
            auto drow = dh.row(a);
            if (row_all_zero(drow)) continue;
            copy_row(drow, dz);
            scale_by_activation_grad(cfg_.fusion_activation, t.h[0].row(a), dz);
            if (row_all_zero(dz)) continue;

            axpy(Real(1), dz, dbias);
            auto x = data_.user_features.row(a);
            std::copy(x.begin(), x.end(), in.begin());
            if (pmat) {
                auto prow = pmat->row(a);
                std::copy(prow.begin(), prow.end(), in.begin() + x.size());
            }
            outer_acc(dw, dz, in);
            if (dp) {
                std::fill(din.begin(), din.end(), Real(0));
                matvec_transpose_acc(w, dz, din);
                for (std::size_t c = 0; c < d; ++c) (*dp)(a, c) += din[x.size() + c];
            }
        }
    } else {
        Matrix& dp = grads.at("P");
        for (std::size_t a = 0; a < m; ++a) axpy(Real(1), dh.row(a), dp.row(a));
    }

    // item fusion
    if (cfg_.use_item_features) {
        const Matrix& w = params_.at("fuse_item.W");
        Matrix& dw = grads.at("fuse_item.W");
        auto dbias = grads.at("fuse_item.b").row(0);
        Matrix* dq = cfg_.use_free_item_embed ? &grads.at("Q") : nullptr;
        const Matrix* qmat = cfg_.use_free_item_embed ? &params_.at("Q") : nullptr;
        std::vector<Real> in(w.cols()), din(w.cols());
        for (std::size_t i = 0; i < dv.rows(); ++i) {
            auto drow = dv.row(i);
            if (row_all_zero(drow)) continue;
            copy_row(drow, dz);
            scale_by_activation_grad(cfg_.fusion_activation, t.v.row(i), dz);
            if (row_all_zero(dz)) continue;

            axpy(Real(1), dz, dbias);
            std::size_t off = 0;
            if (qmat) {
                auto qrow = qmat->row(i);
                std::copy(qrow.begin(), qrow.end(), in.begin());
                off = d;
            }
            auto y = data_.item_features.row(i);
            std::copy(y.begin(), y.end(), in.begin() + off);
            outer_acc(dw, dz, in);
            if (dq) {
                std::fill(din.begin(), din.end(), Real(0));
                matvec_transpose_acc(w, dz, din);
                for (std::size_t c = 0; c < d; ++c) (*dq)(i, c) += din[c];
            }
        }
    } else {
        Matrix& dq = grads.at("Q");
        for (std::size_t i = 0; i < dv.rows(); ++i) axpy(Real(1), dv.row(i), dq.row(i));
    }
}

}  // namespace diffnet
