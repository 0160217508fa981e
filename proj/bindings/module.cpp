#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffnet/checkpoint.hpp"
#include "diffnet/dataset.hpp"
#include "diffnet/diffnet_model.hpp"
#include "diffnet/error.hpp"
#include "diffnet/eval.hpp"
#include "diffnet/rng.hpp"
#include "diffnet/training.hpp"

namespace py = pybind11;
using namespace diffnet;

namespace {

py::array_t<Real> matrix_to_numpy(const Matrix& m) {
    py::array_t<Real> out({static_cast<py::ssize_t>(m.rows()),
                           static_cast<py::ssize_t>(m.cols())});
    std::copy(m.data(), m.data() + m.size(), out.mutable_data());
    return out;
}

bool resolve_flag(const py::object& value, bool available, const char* key) {
    if (value.is_none()) return available;
    const bool wanted = value.cast<bool>();
    if (wanted && !available)
        throw ConfigError(std::string(key) + ": requested but the dataset has no such features");
    return wanted;
}

DiffNetConfig config_from_kwargs(const Dataset& train, std::int32_t embed_dim,
                                 std::int32_t depth, const std::string& pooling,
                                 const std::string& fusion_activation,
                                 const std::string& diffusion_activation,
                                 const py::object& use_user_features,
                                 const py::object& use_item_features, bool use_free_user_embed,
                                 bool use_free_item_embed, bool use_batchnorm,
                                 const std::string& empty_neighbor_policy,
                                 bool exclude_target_item) {
    DiffNetConfig cfg;
    cfg.embed_dim = embed_dim;
    cfg.depth = depth;
    cfg.pooling = pooling_from_string(pooling);
    cfg.fusion_activation = activation_from_string(fusion_activation);
    cfg.diffusion_activations.assign(static_cast<std::size_t>(std::max(depth, 0)),
                                     activation_from_string(diffusion_activation));
    cfg.use_user_features =
        resolve_flag(use_user_features, train.has_user_features(), "use_user_features");
    cfg.use_item_features =
        resolve_flag(use_item_features, train.has_item_features(), "use_item_features");
    cfg.use_free_user_embed = use_free_user_embed;
    cfg.use_free_item_embed = use_free_item_embed;
    cfg.use_batchnorm = use_batchnorm;
    cfg.empty_neighbor_policy = neighbor_policy_from_string(empty_neighbor_policy);
    cfg.exclude_target_item = exclude_target_item;
    cfg.validate();
    return cfg;
}

py::dict result_to_dict(const RankingResult& r) {
    py::dict hr, ndcg;
    for (std::size_t ni = 0; ni < r.top_n.size(); ++ni) {
        hr[py::int_(r.top_n[ni])] = r.hr_mean[ni];
        ndcg[py::int_(r.top_n[ni])] = r.ndcg_mean[ni];
    }
    py::dict out;
    out["hr"] = hr;
    out["ndcg"] = ndcg;
    out["users_evaluated"] = r.users_evaluated;
    out["repetitions"] = r.repetitions;
    if (!r.bucket_names.empty()) {
        py::dict buckets;
        for (std::size_t b = 0; b < r.bucket_names.size(); ++b) {
            py::dict entry, bhr, bndcg;
            for (std::size_t ni = 0; ni < r.top_n.size(); ++ni) {
                bhr[py::int_(r.top_n[ni])] = r.bucket_hr_mean[b][ni];
                bndcg[py::int_(r.top_n[ni])] = r.bucket_ndcg_mean[b][ni];
            }
            entry["users"] = r.bucket_user_counts[b];
            entry["hr"] = bhr;
            entry["ndcg"] = bndcg;
            buckets[py::str(r.bucket_names[b])] = entry;
        }
        out["buckets"] = buckets;
    }
    return out;
}

// Owns the model; the model owns its training-split copy, so a Model object
// is self-contained once built.
struct Model {
    std::unique_ptr<RankingModel> impl;

    RankingModel& get() {
        if (!impl) throw Error("model was moved out");
        return *impl;
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "social recommendation with layered trust-graph diffusion";

    py::register_exception<Error>(m, "DiffnetError", PyExc_RuntimeError);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("num_users", &Dataset::num_users)
        .def_readonly("num_items", &Dataset::num_items)
        .def_readonly("num_interactions", &Dataset::num_interactions)
        .def_readonly("user_ids", &Dataset::user_ids)
        .def_readonly("item_ids", &Dataset::item_ids)
        .def("items_of",
             [](const Dataset& d, std::int32_t user) {
                 auto s = d.items_of(user);
                 return std::vector<std::int32_t>(s.begin(), s.end());
             },
             py::arg("user"))
        .def("trusted_of",
             [](const Dataset& d, std::int32_t user) {
                 auto s = d.trusted_of(user);
                 return std::vector<std::int32_t>(s.begin(), s.end());
             },
             py::arg("user"))
        .def("rated", &Dataset::rated, py::arg("user"), py::arg("item"))
        .def("total_trust_edges", &Dataset::total_trust_edges)
        .def("find_user", &Dataset::find_user, py::arg("original_id"))
        .def("find_item", &Dataset::find_item, py::arg("original_id"))
        .def("user_features", [](const Dataset& d) { return matrix_to_numpy(d.user_features); })
        .def("item_features", [](const Dataset& d) { return matrix_to_numpy(d.item_features); })
        .def("__repr__", [](const Dataset& d) {
            return "Dataset(users=" + std::to_string(d.num_users) +
                   ", items=" + std::to_string(d.num_items) +
                   ", interactions=" + std::to_string(d.num_interactions) +
                   ", trust_edges=" + std::to_string(d.total_trust_edges()) + ")";
        });

    py::class_<DataSplit>(m, "DataSplit")
        .def_readonly("train", &DataSplit::train)
        .def_readonly("validation", &DataSplit::validation)
        .def_readonly("test", &DataSplit::test);

    m.def(
        "synthesize",
        [](std::int32_t num_users, std::int32_t num_items, double avg_degree,
           double homophily_strength, std::int32_t latent_dim, std::int32_t positives_per_user,
           double feature_noise, std::uint64_t seed) {
            SynthConfig cfg;
            cfg.num_users = num_users;
            cfg.num_items = num_items;
            cfg.avg_degree = avg_degree;
            cfg.homophily_strength = homophily_strength;
            cfg.latent_dim = latent_dim;
            cfg.positives_per_user = positives_per_user;
            cfg.feature_noise = feature_noise;
            cfg.rng_seed = seed;
            return synthesize(cfg);
        },
        py::arg("num_users") = 100, py::arg("num_items") = 200, py::arg("avg_degree") = 8.0,
        py::arg("homophily_strength") = 0.5, py::arg("latent_dim") = 8,
        py::arg("positives_per_user") = 10, py::arg("feature_noise") = 0.1,
        py::arg("seed") = 0, "Synthetic dataset with a planted social signal");

    m.def("load_dataset", &load_dataset, py::arg("ratings_file"), py::arg("trust_file"),
          py::arg("user_features_file") = std::nullopt,
          py::arg("item_features_file") = std::nullopt);
    m.def("save_dataset", &save_dataset, py::arg("data"), py::arg("directory"));

    m.def(
        "split",
        [](const Dataset& data, double test_fraction, double validation_fraction,
           std::uint64_t seed) {
            return split(data, SplitSpec{test_fraction, validation_fraction, seed});
        },
        py::arg("data"), py::arg("test_fraction") = 0.1, py::arg("validation_fraction") = 0.09,
        py::arg("seed") = 0);

    py::class_<Model>(m, "Model")
        .def_property_readonly("kind", [](Model& self) { return self.get().kind(); })
        .def("score", [](Model& self, std::int32_t user,
                         std::int32_t item) { return self.get().score(user, item); },
             py::arg("user"), py::arg("item"))
        .def("refresh", [](Model& self) { self.get().refresh(); })
        .def("param_names",
             [](Model& self) {
                 std::vector<std::string> names;
                 for (const auto& t : self.get().params()) names.push_back(t.name);
                 return names;
             })
        .def("param",
             [](Model& self, const std::string& name) {
                 const Matrix* t = self.get().params().find(name);
                 if (!t) throw ConfigError("no parameter named '" + name + "'");
                 return matrix_to_numpy(*t);
             },
             py::arg("name"))
        .def("save",
             [](Model& self, const std::filesystem::path& path) {
                 save_checkpoint(snapshot_model(self.get(), "", 0, 0), path);
             },
             py::arg("path"))
        .def("__repr__", [](Model& self) { return "Model(kind='" + self.get().kind() + "')"; });

    m.def(
        "make_model",
        [](const std::string& kind, const Dataset& train, std::uint64_t seed,
           std::int32_t embed_dim, std::int32_t depth, const std::string& pooling,
           const std::string& fusion_activation, const std::string& diffusion_activation,
           const py::object& use_user_features, const py::object& use_item_features,
           bool use_free_user_embed, bool use_free_item_embed, bool use_batchnorm,
           const std::string& empty_neighbor_policy, bool exclude_target_item) {
            DiffNetConfig cfg = config_from_kwargs(
                train, embed_dim, depth, pooling, fusion_activation, diffusion_activation,
                use_user_features, use_item_features, use_free_user_embed, use_free_item_embed,
                use_batchnorm, empty_neighbor_policy, exclude_target_item);
            return Model{make_model(kind, train, cfg, seed)};
        },
        py::arg("kind"), py::arg("train"), py::arg("seed") = 0, py::arg("embed_dim") = 64,
        py::arg("depth") = 2, py::arg("pooling") = "average",
        py::arg("fusion_activation") = "sigmoid", py::arg("diffusion_activation") = "relu",
        py::arg("use_user_features") = py::none(), py::arg("use_item_features") = py::none(),
        py::arg("use_free_user_embed") = true, py::arg("use_free_item_embed") = true,
        py::arg("use_batchnorm") = true, py::arg("empty_neighbor_policy") = "zero_vector",
        py::arg("exclude_target_item") = false,
        "Build an untrained model over the given training split");

    m.def(
        "load_model",
        [](const std::filesystem::path& path, const Dataset& train, std::uint64_t seed,
           std::int32_t embed_dim, std::int32_t depth, const std::string& pooling,
           const std::string& fusion_activation, const std::string& diffusion_activation,
           const py::object& use_user_features, const py::object& use_item_features,
           bool use_free_user_embed, bool use_free_item_embed, bool use_batchnorm,
           const std::string& empty_neighbor_policy, bool exclude_target_item) {
            Checkpoint ck = load_checkpoint(path);
            DiffNetConfig cfg = config_from_kwargs(
                train, embed_dim, depth, pooling, fusion_activation, diffusion_activation,
                use_user_features, use_item_features, use_free_user_embed, use_free_item_embed,
                use_batchnorm, empty_neighbor_policy, exclude_target_item);
            Model model{make_model(ck.model_kind, train, cfg, seed)};
            restore_model(*model.impl, ck);
            return model;
        },
        py::arg("path"), py::arg("train"), py::arg("seed") = 0, py::arg("embed_dim") = 64,
        py::arg("depth") = 2, py::arg("pooling") = "average",
        py::arg("fusion_activation") = "sigmoid", py::arg("diffusion_activation") = "relu",
        py::arg("use_user_features") = py::none(), py::arg("use_item_features") = py::none(),
        py::arg("use_free_user_embed") = true, py::arg("use_free_item_embed") = true,
        py::arg("use_batchnorm") = true, py::arg("empty_neighbor_policy") = "zero_vector",
        py::arg("exclude_target_item") = false,
        "Rebuild a model of the checkpointed kind and restore its tensors");

    m.def(
        "train",
        [](Model& model, const DataSplit& data, Real learning_rate, std::int32_t batch_size,
           std::int32_t neg_samples_per_pos, Real lambda_, std::int32_t max_epochs,
           std::int32_t early_stop_patience, std::int32_t val_num_negatives,
           std::uint64_t seed) {
            TrainConfig cfg;
            cfg.learning_rate = learning_rate;
            cfg.batch_size = batch_size;
            cfg.neg_samples_per_pos = neg_samples_per_pos;
            cfg.lambda = lambda_;
            cfg.max_epochs = max_epochs;
            cfg.early_stop_patience = early_stop_patience;
            cfg.val_num_negatives = val_num_negatives;
            cfg.rng_seed = seed;
            TrainResult res;
            {
                py::gil_scoped_release release;
                res = train(model.get(), data, cfg);
            }
            py::list log;
            for (const EpochLog& e : res.log) {
                py::dict row;
                row["epoch"] = e.epoch;
                row["mean_loss"] = e.mean_loss;
                row["val_hr10"] = e.val_hr10;
                row["val_ndcg10"] = e.val_ndcg10;
                log.append(row);
            }
            py::dict out;
            out["log"] = log;
            out["best_epoch"] = res.best_epoch;
            out["best_val_ndcg"] = res.best_val_ndcg;
            out["epochs_completed"] = res.epochs_completed;
            return out;
        },
        py::arg("model"), py::arg("data"), py::arg("learning_rate") = 0.001,
        py::arg("batch_size") = 512, py::arg("neg_samples_per_pos") = 10,
        py::arg("lambda_") = 0.001, py::arg("max_epochs") = 100,
        py::arg("early_stop_patience") = 10, py::arg("val_num_negatives") = 1000,
        py::arg("seed") = 0, "Mini-batch pairwise training with Adam");

    m.def(
        "evaluate",
        [](Model& model, const DataSplit& data, const std::vector<std::int32_t>& top_n,
           std::int32_t num_sampled_negatives, std::int32_t num_repetitions, std::uint64_t seed,
           const std::vector<std::int64_t>& bucket_boundaries) {
            EvalConfig cfg;
            cfg.top_n = top_n;
            cfg.num_sampled_negatives = num_sampled_negatives;
            cfg.num_repetitions = num_repetitions;
            cfg.rng_seed = seed;
            RankingResult r;
            {
                py::gil_scoped_release release;
                r = evaluate(make_score_fn(model.get()), data, cfg, bucket_boundaries);
            }
            return result_to_dict(r);
        },
        py::arg("model"), py::arg("data"), py::arg("top_n") = std::vector<std::int32_t>{5, 10, 15},
        py::arg("num_sampled_negatives") = 1000, py::arg("num_repetitions") = 10,
        py::arg("seed") = 0, py::arg("bucket_boundaries") = std::vector<std::int64_t>{},
        "Sampled top-N ranking metrics over the test split");

    m.def(
        "recommend",
        [](Model& model, const Dataset& full, const std::string& user_id, std::int32_t top_n) {
            const std::int32_t user = full.find_user(user_id);
            if (user < 0) throw DataError("unknown user id '" + user_id + "'");
            const auto rated = full.items_of(user);
            std::vector<std::pair<Real, std::int32_t>> scored;
            for (std::int32_t item = 0; item < full.num_items; ++item) {
                if (std::binary_search(rated.begin(), rated.end(), item)) continue;
                scored.emplace_back(model.get().score(user, item), item);
            }
            const std::size_t keep =
                std::min<std::size_t>(scored.size(),
                                      static_cast<std::size_t>(std::max(top_n, 0)));
            std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                              scored.end(), [](const auto& a, const auto& b) {
                                  if (a.first != b.first) return a.first > b.first;
                                  return a.second < b.second;
                              });
            py::list out;
            for (std::size_t i = 0; i < keep; ++i)
                out.append(py::make_tuple(full.item_ids[static_cast<std::size_t>(
                                              scored[i].second)],
                                          scored[i].first));
            return out;
        },
        py::arg("model"), py::arg("data"), py::arg("user_id"), py::arg("top_n") = 10,
        "Top scoring unrated items for one user, as (item_id, score) tuples");
}
