#include "diffnet/training.hpp"

#include <cmath>

#include "diffnet/eval.hpp"
#include "diffnet/log.hpp"
#include "diffnet/rng.hpp"
#include "diffnet/textio.hpp"

namespace diffnet {

void TrainConfig::validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate: must be positive");
    if (batch_size < 1) throw ConfigError("batch_size: must be at least 1");
    if (neg_samples_per_pos < 1) throw ConfigError("neg_samples_per_pos: must be at least 1");
    if (lambda < 0) throw ConfigError("lambda: must be non-negative");
    if (max_epochs < 0) throw ConfigError("max_epochs: must be non-negative");
    if (early_stop_patience < 0) throw ConfigError("early_stop_patience: must be non-negative");
    if (val_num_negatives < 1) throw ConfigError("val_num_negatives: must be at least 1");
}

std::vector<TrainPair> sample_pairs(const Dataset& train, std::uint64_t epoch_seed,
                                    std::int32_t neg_samples_per_pos) {
    if (neg_samples_per_pos < 1)
        throw ConfigError("neg_samples_per_pos: must be at least 1");
    Rng rng(epoch_seed);
    std::vector<TrainPair> out;
    out.reserve(train.num_interactions * static_cast<std::size_t>(neg_samples_per_pos));

    std::size_t saturated = 0;
    for (std::int32_t a = 0; a < train.num_users; ++a) {
        auto items = train.items_of(a);
        if (items.empty()) continue;
        if (items.size() == static_cast<std::size_t>(train.num_items)) {
            // no unrated item exists to pair against
            ++saturated;
            continue;
        }
        for (std::int32_t i : items) {
            for (std::int32_t k = 0; k < neg_samples_per_pos; ++k) {
                std::int32_t j;
                do {
                    j = static_cast<std::int32_t>(
                        rng.uniform_index(static_cast<std::uint64_t>(train.num_items)));
                } while (train.rated(a, j));
                out.push_back({a, i, j});
            }
        }
    }
    if (saturated > 0)
        logging::warn("sample_pairs: %zu user(s) rated every item, skipped", saturated);
    return out;
}

std::vector<BatchRange> make_batches(std::span<const TrainPair> pairs,
                                     std::int32_t batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size: must be at least 1");
    const auto cap = static_cast<std::size_t>(batch_size);
    std::vector<BatchRange> out;
    std::size_t oversized = 0;

    std::size_t pos = 0;
    while (pos < pairs.size()) {
        std::size_t end = pos;
        while (end < pairs.size()) {
            // one contiguous user group
            std::size_t gend = end;
            const std::int32_t u = pairs[gend].user;
            while (gend < pairs.size() && pairs[gend].user == u) ++gend;
            const std::size_t glen = gend - end;
            if (end == pos && glen > cap) {
                // a single user's block exceeds the batch size; keep it whole
                end = gend;
                ++oversized;
                break;
            }
            if (end - pos + glen > cap) break;
            end = gend;
        }
        out.push_back({pos, end});
        pos = end;
    }
    if (oversized > 0)
        logging::warn("make_batches: %zu oversized user group(s) kept as whole batches",
                      oversized);
    return out;
}

PairLoss pairwise_loss(std::span<const Real> pos_scores, std::span<const Real> neg_scores,
                       const ParamSet& params, std::span<const std::string> regularized,
                       Real lambda) {
    if (pos_scores.size() != neg_scores.size())
        throw DimError("pairwise_loss: score arrays differ in length");
    PairLoss r;
    r.dpos.resize(pos_scores.size());
    r.dneg.resize(pos_scores.size());
    for (std::size_t p = 0; p < pos_scores.size(); ++p) {
        const Real diff = pos_scores[p] - neg_scores[p];
        // -ln sigmoid(diff), evaluated without overflow on either tail
        const Real loss = diff > 0 ? std::log1p(std::exp(-diff))
                                   : -diff + std::log1p(std::exp(diff));
        const Real g = -activate(Activation::sigmoid, -diff);  // d loss / d diff
        r.ranking_loss += loss;
        r.dpos[p] = g;
        r.dneg[p] = -g;
    }
    for (const auto& name : regularized) r.reg_loss += squared_norm(params.at(name).flat());
    r.reg_loss *= lambda;
    return r;
}

void add_regularization_gradient(const ParamSet& params,
                                 std::span<const std::string> regularized, Real lambda,
                                 GradientSet& grads) {
    for (const auto& name : regularized)
        axpy(2 * lambda, params.at(name).flat(), grads.at(name).flat());
}

std::string format_epoch_log(const EpochLog& e) {
    return std::to_string(e.epoch) + "\t" + format_g17(static_cast<double>(e.mean_loss)) +
           "\t" + format_g17(static_cast<double>(e.val_hr10)) + "\t" +
           format_g17(static_cast<double>(e.val_ndcg10));
}

namespace {

std::string abort_diagnostic(const RankingModel& model, std::int32_t epoch, std::size_t batch,
                             std::size_t num_batches, std::span<const TrainPair> pairs,
                             std::span<const Real> pos, std::span<const Real> neg,
                             const PairLoss& pl) {
    std::string d;
    d += "non-finite training loss\n";
    d += "model=" + model.kind() + " epoch=" + std::to_string(epoch) + " batch=" +
         std::to_string(batch + 1) + "/" + std::to_string(num_batches) + "\n";
    d += "ranking_loss=" + format_g17(static_cast<double>(pl.ranking_loss)) +
         " reg_loss=" + format_g17(static_cast<double>(pl.reg_loss)) + "\n";
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (std::isfinite(pos[p]) && std::isfinite(neg[p])) continue;
        d += "first bad pair: index=" + std::to_string(p) +
             " user=" + std::to_string(pairs[p].user) +
             " pos_item=" + std::to_string(pairs[p].pos_item) +
             " neg_item=" + std::to_string(pairs[p].neg_item) +
             " pos_score=" + format_g17(static_cast<double>(pos[p])) +
             " neg_score=" + format_g17(static_cast<double>(neg[p])) + "\n";
        break;
    }
    for (const auto& e : model.params())
        if (!e.value.all_finite()) d += "tensor '" + e.name + "' holds non-finite values\n";
    return d;
}

}  // namespace

// rank the validation positives, excluding train+validation as known
DataSplit validation_view(const DataSplit& data) {
    DataSplit view;
    view.train = data.train;
    view.test = data.validation;
    view.validation = data.validation;
    for (auto& items : view.validation.interactions) items.clear();
    view.validation.num_interactions = 0;
    return view;
}

TrainResult train(RankingModel& model, const DataSplit& data, const TrainConfig& cfg,
                  AdamState* adam, std::int32_t start_epoch,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (data.train.num_interactions == 0)
        throw DataError("train: training split has no interactions");

    const bool has_val = data.validation.num_interactions > 0;
    const bool stop_early = cfg.early_stop_patience > 0 && has_val;
    if (cfg.early_stop_patience > 0 && !has_val)
        logging::warn("train: validation split is empty, early stopping disabled");

    AdamState local_adam;
    if (!adam) {
        local_adam = AdamState(model.params(),
                               {cfg.learning_rate, Real(0.9), Real(0.999), Real(1e-8)});
        adam = &local_adam;
    }

    EvalConfig vcfg;
    vcfg.top_n = {10};
    vcfg.num_sampled_negatives = cfg.val_num_negatives;
    vcfg.num_repetitions = 1;
    vcfg.rng_seed = derive_seed(cfg.rng_seed, "val");
    DataSplit val_view;
    if (has_val) val_view = validation_view(data);

    TrainResult res;
    res.epochs_completed = start_epoch;
    ParamSet best_params;
    ParamSet best_extra;
    bool have_best = false;
    std::int32_t since_best = 0;
    const auto reg_names = model.regularized_params();

    for (std::int32_t epoch = start_epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::uint64_t epoch_seed =
            derive_seed(cfg.rng_seed, "sampling", static_cast<std::uint64_t>(epoch));
        const auto pairs = sample_pairs(data.train, epoch_seed, cfg.neg_samples_per_pos);
        if (pairs.empty()) throw DataError("train: no training pairs could be sampled");
        const auto batches = make_batches(pairs, cfg.batch_size);

        Real loss_sum = 0;
        std::vector<Real> pos, neg;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::span<const TrainPair> bp(pairs.data() + batches[b].begin,
                                          batches[b].end - batches[b].begin);
            pos.resize(bp.size());
            neg.resize(bp.size());
            model.forward_pairs(bp, pos, neg);
            PairLoss pl = pairwise_loss(pos, neg, model.params(), reg_names, cfg.lambda);
            if (!std::isfinite(pl.total()))
                throw TrainAbort(
                    "training aborted: non-finite loss at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(b + 1),
                    abort_diagnostic(model, epoch, b, batches.size(), bp, pos, neg, pl));
            loss_sum += pl.ranking_loss;

            GradientSet grads = model.params().zeros_like();
            model.backward_pairs(bp, pl.dpos, pl.dneg, grads);
            add_regularization_gradient(model.params(), reg_names, cfg.lambda, grads);
            adam_step(model.params(), grads, *adam);
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.mean_loss = loss_sum / static_cast<Real>(pairs.size());
        if (has_val) {
            model.refresh();
            RankingResult r = evaluate(make_score_fn(model), val_view, vcfg);
            entry.val_hr10 = r.hr_mean[0];
            entry.val_ndcg10 = r.ndcg_mean[0];
        }
        res.log.push_back(entry);
        res.epochs_completed = epoch;
        if (on_epoch) on_epoch(entry);
        logging::info("epoch %d: loss=%.6f val_hr@10=%.4f val_ndcg@10=%.4f", entry.epoch,
                      static_cast<double>(entry.mean_loss), static_cast<double>(entry.val_hr10),
                      static_cast<double>(entry.val_ndcg10));

        if (has_val) {
            if (entry.val_ndcg10 > res.best_val_ndcg) {
                res.best_val_ndcg = entry.val_ndcg10;
                res.best_epoch = epoch;
                since_best = 0;
                if (stop_early) {
                    best_params = model.params();
                    best_extra = model.extra_state();
                    have_best = true;
                }
            } else if (stop_early && ++since_best >= cfg.early_stop_patience) {
                logging::info("early stop at epoch %d (best %d)", epoch, res.best_epoch);
                break;
            }
        }
    }

    if (have_best) {
        model.params() = best_params;
        model.set_extra_state(best_extra);
    }
    model.refresh();
    return res;
}

}  // namespace diffnet
