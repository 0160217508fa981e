#include "diffnet/cli.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffnet/checkpoint.hpp"
#include "diffnet/dataset.hpp"
#include "diffnet/error.hpp"
#include "diffnet/eval.hpp"
#include "diffnet/log.hpp"
#include "diffnet/rng.hpp"
#include "diffnet/runconfig.hpp"
#include "diffnet/textio.hpp"
#include "diffnet/training.hpp"

namespace fs = std::filesystem;

namespace diffnet::cli {
namespace {

// Overrides arrive as the unconsumed tail of the command line, either
// "--key value" pairs or "--key=value" tokens.
void apply_overrides(std::map<std::string, std::string>& kv,
                     const std::vector<std::string>& extras) {
    std::size_t i = 0;
    while (i < extras.size()) {
        const std::string& tok = extras[i];
        if (tok.rfind("--", 0) != 0)
            throw ConfigError("unexpected argument '" + tok +
                              "' (overrides look like --key value or --key=value)");
        std::string key = tok.substr(2);
        auto eq = key.find('=');
        if (eq != std::string::npos) {
            kv[key.substr(0, eq)] = key.substr(eq + 1);
            ++i;
        } else {
            if (i + 1 >= extras.size())
                throw ConfigError("missing value for override --" + key);
            kv[key] = extras[i + 1];
            i += 2;
        }
    }
}

RunConfig build_config(const std::string& config_path, const std::vector<std::string>& extras,
                       std::map<std::string, std::string> base = {}) {
    if (!config_path.empty()) {
        auto file_kv = parse_config_text(read_text_file(config_path), config_path);
        for (auto& [k, v] : file_kv) base[k] = std::move(v);
    }
    apply_overrides(base, extras);
    return run_config_from_kv(base);
}

std::string checkpoint_file(const RunConfig& cfg) {
    return (fs::path(cfg.out_dir) / "checkpoint.bin").string();
}

// Loads the dataset, applies the split, and rebuilds the stored model. The
// checkpoint's embedded config is the base layer; file and overrides win.
struct RestoredRun {
    RunConfig cfg;
    Dataset full;
    DataSplit splits;
    std::unique_ptr<RankingModel> model;
    Checkpoint ck;
};

RestoredRun restore_run(const std::string& ck_path, const std::string& config_path,
                        const std::vector<std::string>& extras) {
    RestoredRun r;
    r.ck = load_checkpoint(ck_path);
    auto base = parse_config_text(r.ck.config_text, ck_path + " (embedded config)");
    r.cfg = build_config(config_path, extras, std::move(base));
    if (r.cfg.model != r.ck.model_kind)
        throw ConfigError("model: checkpoint holds '" + r.ck.model_kind +
                          "' but the configuration asks for '" + r.cfg.model + "'");
    r.full = load_or_synthesize(r.cfg);
    r.splits = split(r.full, make_split_spec(r.cfg));
    r.model = make_model(r.ck.model_kind, r.splits.train, resolve_net_config(r.cfg, r.full),
                         derive_seed(r.cfg.seed, "init"));
    restore_model(*r.model, r.ck);
    return r;
}

// Resuming requires the stored run configuration to match the requested one
// everywhere except the knobs that may legitimately move between runs.
void check_resume_compatible(const RunConfig& stored, const RunConfig& requested) {
    auto a = run_config_to_kv(stored);
    auto b = run_config_to_kv(requested);
    for (const char* key : {"resume_from", "out_dir", "max_epochs", "early_stop_patience"}) {
        a.erase(key);
        b.erase(key);
    }
    for (const auto& [key, value] : a) {
        const auto it = b.find(key);
        if (it != b.end() && it->second != value)
            throw ConfigError("resume_from: config mismatch at '" + key + "' (checkpoint: " +
                              value + ", requested: " + it->second + ")");
    }
}

int cmd_train(const RunConfig& cfg) {
    Dataset full = load_or_synthesize(cfg);
    DataSplit splits = split(full, make_split_spec(cfg));
    DiffNetConfig net = resolve_net_config(cfg, full);

    fs::create_directories(cfg.out_dir);

    std::unique_ptr<RankingModel> model;
    std::optional<AdamState> adam;
    std::int32_t start_epoch = 0;
    const AdamConfig acfg{cfg.learning_rate, 0.9, 0.999, 1e-8};
    const bool resuming = !cfg.resume_from.empty();

    if (resuming) {
        Checkpoint ck = load_checkpoint(cfg.resume_from);
        if (ck.model_kind != cfg.model)
            throw ConfigError("resume_from: checkpoint holds '" + ck.model_kind +
                              "' but the configuration asks for '" + cfg.model + "'");
        RunConfig stored = run_config_from_kv(
            parse_config_text(ck.config_text, cfg.resume_from + " (embedded config)"));
        check_resume_compatible(stored, cfg);
        model = make_model(cfg.model, splits.train, net, derive_seed(cfg.seed, "init"));
        restore_model(*model, ck);
        adam = restore_adam(ck, model->params(), acfg);
        start_epoch = static_cast<std::int32_t>(ck.epoch_cursor);
        std::printf("resuming %s from %s at epoch %d\n", cfg.model.c_str(),
                    cfg.resume_from.c_str(), start_epoch);
    } else {
        model = make_model(cfg.model, splits.train, net, derive_seed(cfg.seed, "init"));
    }
    if (!adam) adam.emplace(model->params(), acfg);

    save_split_manifest(splits, fs::path(cfg.out_dir) / "split_manifest.tsv");

    std::ofstream log_out(fs::path(cfg.out_dir) / "train_log.tsv",
                          resuming ? std::ios::app : std::ios::trunc);
    if (!log_out) throw DataError(cfg.out_dir + "/train_log.tsv: cannot open for writing");
    auto on_epoch = [&log_out](const EpochLog& e) {
        log_out << format_epoch_log(e) << '\n';
        log_out.flush();
    };

    TrainResult res;
    try {
        res = train(*model, splits, make_train_config(cfg), &*adam, start_epoch, on_epoch);
    } catch (const TrainAbort& e) {
        const fs::path diag = fs::path(cfg.out_dir) / "abort_diagnostic.txt";
        write_file_atomic(diag, e.diagnostic);
        std::fprintf(stderr, "diagnostic written to %s\n", diag.string().c_str());
        throw;
    }

    const std::uint64_t cursor = static_cast<std::uint64_t>(res.epochs_completed);
    Checkpoint ck = snapshot_model(*model, canonical_config_text(cfg), cursor,
                                   derive_seed(cfg.seed, "sampling", cursor + 1), &*adam);
    save_checkpoint(ck, checkpoint_file(cfg));

    std::printf("trained %s for %d epoch(s)", cfg.model.c_str(),
                res.epochs_completed - start_epoch);
    if (res.best_epoch > 0)
        std::printf(", best epoch %d (val ndcg@10 %.6f)", res.best_epoch,
                    static_cast<double>(res.best_val_ndcg));
    std::printf("\ncheckpoint: %s\n", checkpoint_file(cfg).c_str());
    std::printf("config digest: %s\n", config_digest_hex(cfg).c_str());
    return 0;
}

void print_result_summary(const RankingResult& r) {
    for (std::size_t ni = 0; ni < r.top_n.size(); ++ni)
        std::printf("hr@%d %.6f  ndcg@%d %.6f\n", r.top_n[ni],
                    static_cast<double>(r.hr_mean[ni]), r.top_n[ni],
                    static_cast<double>(r.ndcg_mean[ni]));
}

int cmd_evaluate(const std::string& ck_path, const std::string& config_path,
                 const std::vector<std::string>& extras, std::string out_path) {
    RestoredRun r = restore_run(ck_path, config_path, extras);
    RankingResult result = evaluate(make_score_fn(*r.model), r.splits, make_eval_config(r.cfg),
                                    r.cfg.bucket_boundaries);
    const std::string table =
        format_results_table(result, r.ck.model_kind, config_digest_hex(r.cfg));
    if (out_path.empty()) out_path = (fs::path(r.cfg.out_dir) / "results.tsv").string();
    fs::create_directories(fs::path(out_path).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out_path).parent_path());
    write_file_atomic(out_path, table);
    std::printf("evaluated %s over %d user(s), %d repetition(s)\n", r.ck.model_kind.c_str(),
                result.users_evaluated, result.repetitions);
    print_result_summary(result);
    std::printf("results: %s\n", out_path.c_str());
    return 0;
}

struct AblationCell {
    std::int32_t depth = 0;
    std::string variant;
    bool ok = false;
    std::string error;
    Real hr10 = 0, ndcg10 = 0;
};

// Variant names switch off one input side of the model; "full" leaves the
// configuration untouched.
DiffNetConfig apply_variant(DiffNetConfig net, std::int32_t depth, const std::string& variant) {
    net.depth = depth;
    net.diffusion_activations.assign(static_cast<std::size_t>(depth),
                                     net.diffusion_activation(0));
    if (variant == "x0") net.use_user_features = false;
    else if (variant == "y0") net.use_item_features = false;
    else if (variant == "xy0") net.use_user_features = net.use_item_features = false;
    else if (variant == "p0") net.use_free_user_embed = false;
    else if (variant == "q0") net.use_free_item_embed = false;
    else if (variant != "full") throw ConfigError("ablate_variants: unknown variant '" + variant + "'");
    net.validate();
    return net;
}

int cmd_ablate(const RunConfig& cfg) {
    if (cfg.model != "diffnet")
        throw ConfigError("model: ablation grids only apply to diffnet");
    Dataset full = load_or_synthesize(cfg);
    DataSplit splits = split(full, make_split_spec(cfg));
    const DiffNetConfig base_net = resolve_net_config(cfg, full);

    // every cell shares the init seed and training/eval streams
    const std::uint64_t init_seed = derive_seed(cfg.seed, "init");
    TrainConfig tcfg = make_train_config(cfg);
    EvalConfig ecfg = make_eval_config(cfg);
    ecfg.top_n = {10};

    auto run_cell = [&](std::int32_t depth, const std::string& variant) {
        AblationCell cell;
        cell.depth = depth;
        cell.variant = variant;
        try {
            DiffNetConfig net = apply_variant(base_net, depth, variant);
            auto model = make_model(cfg.model, splits.train, net, init_seed);
            train(*model, splits, tcfg);
            RankingResult r = evaluate(make_score_fn(*model), splits, ecfg);
            cell.hr10 = r.hr_mean.at(0);
            cell.ndcg10 = r.ndcg_mean.at(0);
            cell.ok = true;
        } catch (const Error& e) {
            cell.error = e.what();
        }
        return cell;
    };

    // the baseline cell is the configured depth with every input enabled
    AblationCell baseline = run_cell(cfg.depth, "full");
    if (!baseline.ok)
        throw ConfigError("ablate: baseline cell (depth " + std::to_string(cfg.depth) +
                          ", full) failed: " + baseline.error);

    std::vector<AblationCell> cells;
    bool grid_has_baseline = false;
    for (std::int32_t depth : cfg.ablate_depths)
        for (const std::string& variant : cfg.ablate_variants) {
            if (depth == cfg.depth && variant == "full") {
                cells.push_back(baseline);
                grid_has_baseline = true;
                continue;
            }
            cells.push_back(run_cell(depth, variant));
            logging::info("ablate: depth %d variant %s %s", depth, variant.c_str(),
                          cells.back().ok ? "ok" : cells.back().error.c_str());
        }
    if (!grid_has_baseline) cells.insert(cells.begin(), baseline);

    std::string table = "# config_digest=" + config_digest_hex(cfg) + "\n";
    table += "depth\tvariant\thr@10\tndcg@10\tdelta_hr_pct\tdelta_ndcg_pct\tstatus\n";
    auto pct = [](Real v, Real base) {
        return static_cast<Real>(base != 0 ? (v - base) / base * 100 : 0);
    };
    for (const AblationCell& c : cells) {
        table += std::to_string(c.depth) + "\t" + c.variant + "\t";
        if (c.ok) {
            table += format_g17(c.hr10) + "\t" + format_g17(c.ndcg10) + "\t";
            table += format_g17(pct(c.hr10, baseline.hr10)) + "\t";
            table += format_g17(pct(c.ndcg10, baseline.ndcg10)) + "\tok\n";
        } else {
            table += "-\t-\t-\t-\terror: " + c.error + "\n";
        }
    }

    fs::create_directories(cfg.out_dir);
    const fs::path out = fs::path(cfg.out_dir) / "ablation.tsv";
    write_file_atomic(out, table);
    std::fputs(table.c_str(), stdout);
    std::printf("ablation: %s\n", out.string().c_str());
    return 0;
}

int cmd_recommend(const std::string& ck_path, const std::string& config_path,
                  const std::vector<std::string>& extras, const std::string& user_id,
                  std::int32_t top_n) {
    if (top_n < 0) throw ConfigError("top-n: must be >= 0");
    RestoredRun r = restore_run(ck_path, config_path, extras);
    const std::int32_t user = r.full.find_user(user_id);
    if (user < 0) throw DataError("unknown user id '" + user_id + "'");

    const auto rated = r.full.items_of(user);
    std::vector<std::pair<Real, std::int32_t>> scored;
    scored.reserve(static_cast<std::size_t>(r.full.num_items) - rated.size());
    for (std::int32_t item = 0; item < r.full.num_items; ++item) {
        if (std::binary_search(rated.begin(), rated.end(), item)) continue;
        scored.emplace_back(r.model->score(user, item), item);
    }
    if (scored.empty()) {
        logging::warn("recommend: user '%s' has rated every item", user_id.c_str());
        return 0;
    }
    const std::size_t keep = std::min<std::size_t>(scored.size(),
                                                   static_cast<std::size_t>(top_n));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    for (std::size_t rank = 0; rank < keep; ++rank)
        std::printf("%zu\t%s\t%s\n", rank + 1,
                    r.full.item_ids[static_cast<std::size_t>(scored[rank].second)].c_str(),
                    format_g17(scored[rank].first).c_str());
    return 0;
}

int cmd_synth(const RunConfig& cfg, std::string out_dir) {
    if (out_dir.empty()) out_dir = cfg.out_dir;
    Dataset data = synthesize(make_synth_config(cfg));
    save_dataset(data, out_dir);
    std::printf("wrote %d users, %d items, %lld interactions, %zu trust edges to %s\n",
                data.num_users, data.num_items,
                static_cast<long long>(data.num_interactions), data.total_trust_edges(),
                out_dir.c_str());
    return 0;
}

int cmd_dump(const std::string& ck_path, bool with_values) {
    const Checkpoint ck = load_checkpoint(ck_path);
    std::fputs(describe_checkpoint(ck, with_values).c_str(), stdout);
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"social recommendation with layered trust-graph diffusion"};
    app.require_subcommand(1);

    struct {
        std::string config;
    } train_opts, ablate_opts, synth_opts;
    struct {
        std::string checkpoint, config, out;
        std::string user;
        std::int32_t top_n = 10;
        bool values = false;
    } eval_opts, rec_opts, dump_opts;
    std::string synth_out;

    CLI::App* t = app.add_subcommand("train", "train a model and write a checkpoint");
    t->add_option("--config", train_opts.config, "run configuration file");
    t->allow_extras();

    CLI::App* e = app.add_subcommand("evaluate", "rank held-out items from a checkpoint");
    e->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
    e->add_option("--config", eval_opts.config, "run configuration file");
    e->add_option("--out", eval_opts.out, "results file (default <out_dir>/results.tsv)");
    e->allow_extras();

    CLI::App* a = app.add_subcommand("ablate", "train and evaluate a depth/variant grid");
    a->add_option("--config", ablate_opts.config, "run configuration file");
    a->allow_extras();

    CLI::App* r = app.add_subcommand("recommend", "top scoring unrated items for one user");
    r->add_option("--checkpoint", rec_opts.checkpoint, "checkpoint file")->required();
    r->add_option("--config", rec_opts.config, "run configuration file");
    r->add_option("--user", rec_opts.user, "user id as written in the ratings file")->required();
    r->add_option("--top-n", rec_opts.top_n, "number of items to print");
    r->allow_extras();

    CLI::App* s = app.add_subcommand("synth", "generate a synthetic dataset");
    s->add_option("--config", synth_opts.config, "run configuration file");
    s->add_option("--out", synth_out, "output directory (default out_dir)");
    s->allow_extras();

    CLI::App* d = app.add_subcommand("dump-checkpoint", "describe a checkpoint file");
    d->add_option("--checkpoint", dump_opts.checkpoint, "checkpoint file")->required();
    d->add_flag("--values", dump_opts.values, "also print every tensor entry");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? 0 : 1;
    }

    try {
        if (t->parsed()) return cmd_train(build_config(train_opts.config, t->remaining()));
        if (e->parsed())
            return cmd_evaluate(eval_opts.checkpoint, eval_opts.config, e->remaining(),
                                eval_opts.out);
        if (a->parsed()) return cmd_ablate(build_config(ablate_opts.config, a->remaining()));
        if (r->parsed())
            return cmd_recommend(rec_opts.checkpoint, rec_opts.config, r->remaining(),
                                 rec_opts.user, rec_opts.top_n);
        if (s->parsed()) return cmd_synth(build_config(synth_opts.config, s->remaining()),
                                          synth_out);
        if (d->parsed()) return cmd_dump(dump_opts.checkpoint, dump_opts.values);
    } catch (const TrainAbort& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    } catch (const Error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    }
    return 1;
}

}  // namespace diffnet::cli
