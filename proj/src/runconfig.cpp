#include "diffnet/runconfig.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>

#include "diffnet/rng.hpp"
#include "diffnet/textio.hpp"

namespace diffnet {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
    throw ConfigError(key + ": cannot parse '" + value + "' (" + expected + ")");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
    T out{};
    auto sv = trim(value);
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), out);
    if (ec != std::errc() || p != sv.data() + sv.size()) bad_value(key, value, expected);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    auto sv = trim(value);
    if (sv == "true") return true;
    if (sv == "false") return false;
    bad_value(key, value, "expected true or false");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value,
                          const char* expected) {
    std::vector<T> out;
    auto sv = trim(value);
    if (sv.empty()) return out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = sv.find(',', pos);
        auto tok = trim(sv.substr(pos, next == std::string_view::npos ? next : next - pos));
        out.push_back(parse_number<T>(key, std::string(tok), expected));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& value) {
    std::vector<std::string> out;
    auto sv = trim(value);
    if (sv.empty()) return out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = sv.find(',', pos);
        out.emplace_back(trim(sv.substr(pos, next == std::string_view::npos ? next : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

template <typename T>
std::string join_list(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i > 0) out += ',';
        if constexpr (std::is_same_v<T, std::string>)
            out += xs[i];
        else
            out += std::to_string(xs[i]);
    }
    return out;
}

// field registry: one reader (kv -> struct) and one writer (struct -> kv) per key
struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> read;
    std::function<std::string(const RunConfig&)> write;
};

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        auto str = [&](const char* key, std::string RunConfig::*member) {
            f[key] = {[member](RunConfig& c, const std::string&, const std::string& v) {
                          c.*member = std::string(trim(v));
                      },
                      [member](const RunConfig& c) { return c.*member; }};
        };
        auto i32 = [&](const char* key, std::int32_t RunConfig::*member) {
            f[key] = {[member](RunConfig& c, const std::string& k, const std::string& v) {
                          c.*member = parse_number<std::int32_t>(k, v, "expected an integer");
                      },
                      [member](const RunConfig& c) { return std::to_string(c.*member); }};
        };
        auto f64 = [&](const char* key, double RunConfig::*member) {
            f[key] = {[member](RunConfig& c, const std::string& k, const std::string& v) {
                          c.*member = parse_number<double>(k, v, "expected a number");
                      },
                      [member](const RunConfig& c) { return format_g17(c.*member); }};
        };
        auto boolean = [&](const char* key, bool RunConfig::*member) {
            f[key] = {[member](RunConfig& c, const std::string& k, const std::string& v) {
                          c.*member = parse_bool(k, v);
                      },
                      [member](const RunConfig& c) { return c.*member ? "true" : "false"; }};
        };

        str("model", &RunConfig::model);
        f["seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                         c.seed = parse_number<std::uint64_t>(k, v, "expected an integer");
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }};
        str("ratings_path", &RunConfig::ratings_path);
        str("trust_path", &RunConfig::trust_path);
        str("user_features_path", &RunConfig::user_features_path);
        str("item_features_path", &RunConfig::item_features_path);
        i32("synth_users", &RunConfig::synth_users);
        i32("synth_items", &RunConfig::synth_items);
        f64("synth_avg_degree", &RunConfig::synth_avg_degree);
        f64("synth_homophily", &RunConfig::synth_homophily);
        i32("synth_latent_dim", &RunConfig::synth_latent_dim);
        i32("synth_positives_per_user", &RunConfig::synth_positives_per_user);
        f64("synth_feature_noise", &RunConfig::synth_feature_noise);
        f64("test_fraction", &RunConfig::test_fraction);
        f64("validation_fraction", &RunConfig::validation_fraction);
        i32("embed_dim", &RunConfig::embed_dim);
        i32("depth", &RunConfig::depth);
        str("pooling", &RunConfig::pooling);
        str("fusion_activation", &RunConfig::fusion_activation);
        str("diffusion_activation", &RunConfig::diffusion_activation);
        str("use_user_features", &RunConfig::use_user_features);
        str("use_item_features", &RunConfig::use_item_features);
        boolean("use_free_user_embed", &RunConfig::use_free_user_embed);
        boolean("use_free_item_embed", &RunConfig::use_free_item_embed);
        boolean("use_batchnorm", &RunConfig::use_batchnorm);
        str("empty_neighbor_policy", &RunConfig::empty_neighbor_policy);
        boolean("exclude_target_item", &RunConfig::exclude_target_item);
        f64("learning_rate", &RunConfig::learning_rate);
        i32("batch_size", &RunConfig::batch_size);
        i32("neg_samples_per_pos", &RunConfig::neg_samples_per_pos);
        f64("lambda", &RunConfig::lambda);
        i32("max_epochs", &RunConfig::max_epochs);
        i32("early_stop_patience", &RunConfig::early_stop_patience);
        i32("val_num_negatives", &RunConfig::val_num_negatives);
        f["top_n"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                          c.top_n = parse_list<std::int32_t>(k, v, "expected integers");
                      },
                      [](const RunConfig& c) { return join_list(c.top_n); }};
        i32("num_sampled_negatives", &RunConfig::num_sampled_negatives);
        i32("num_repetitions", &RunConfig::num_repetitions);
        f["bucket_boundaries"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) {
                c.bucket_boundaries = parse_list<std::int64_t>(k, v, "expected integers");
            },
            [](const RunConfig& c) { return join_list(c.bucket_boundaries); }};
        str("out_dir", &RunConfig::out_dir);
        str("resume_from", &RunConfig::resume_from);
        f["ablate_depths"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                                  c.ablate_depths =
                                      parse_list<std::int32_t>(k, v, "expected integers");
                              },
                              [](const RunConfig& c) { return join_list(c.ablate_depths); }};
        f["ablate_variants"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                                    c.ablate_variants = parse_string_list(v);
                                },
                                [](const RunConfig& c) { return join_list(c.ablate_variants); }};
        return f;
    }();
    return table;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text,
                                                     const std::string& source_name) {
    std::map<std::string, std::string> kv;
    std::size_t lineno = 0, pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line;
        if (nl == std::string::npos) {
            if (pos >= text.size()) break;
            line = std::string_view(text).substr(pos);
            pos = text.size() + 1;
        } else {
            line = std::string_view(text).substr(pos, nl - pos);
            pos = nl + 1;
        }
        ++lineno;
        auto sv = trim(line);
        if (sv.empty() || sv.front() == '#') continue;
        auto eq = sv.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(source_name + ":" + std::to_string(lineno) +
                              ": expected 'key = value'");
        auto key = trim(sv.substr(0, eq));
        auto value = trim(sv.substr(eq + 1));
        if (key.empty())
            throw ConfigError(source_name + ":" + std::to_string(lineno) + ": empty key");
        kv[std::string(key)] = std::string(value);
    }
    return kv;
}

RunConfig run_config_from_kv(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    for (const auto& [key, value] : kv) {
        auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
        it->second.read(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

std::map<std::string, std::string> run_config_to_kv(const RunConfig& cfg) {
    std::map<std::string, std::string> kv;
    for (const auto& [key, field] : fields()) kv[key] = field.write(cfg);
    return kv;
}

std::string canonical_config_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, value] : run_config_to_kv(cfg)) out += key + " = " + value + "\n";
    return out;
}

std::string config_digest_hex(const RunConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_config_text(cfg))));
    return buf;
}

void RunConfig::validate() const {
    if (model != "diffnet" && model != "bpr" && model != "svdpp")
        throw ConfigError("model: unknown kind '" + model + "' (expected diffnet, bpr or svdpp)");
    if (!ratings_path.empty() && trust_path.empty())
        throw ConfigError("trust_path: required when ratings_path is set");
    if (ratings_path.empty() && !trust_path.empty())
        throw ConfigError("ratings_path: required when trust_path is set");
    auto check_tri = [](const char* key, const std::string& v) {
        if (v != "auto" && v != "true" && v != "false")
            throw ConfigError(std::string(key) + ": expected auto, true or false");
    };
    check_tri("use_user_features", use_user_features);
    check_tri("use_item_features", use_item_features);
    activation_from_string(fusion_activation);
    activation_from_string(diffusion_activation);
    pooling_from_string(pooling);
    neighbor_policy_from_string(empty_neighbor_policy);
    if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
    for (const auto& v : ablate_variants)
        if (v != "full" && v != "x0" && v != "y0" && v != "xy0" && v != "p0" && v != "q0")
            throw ConfigError("ablate_variants: unknown variant '" + v +
                              "' (expected full, x0, y0, xy0, p0 or q0)");
    make_synth_config(*this).validate();
    make_split_spec(*this).validate();
    make_train_config(*this).validate();
    make_eval_config(*this).validate();
}

SynthConfig make_synth_config(const RunConfig& cfg) {
    SynthConfig s;
    s.num_users = cfg.synth_users;
    s.num_items = cfg.synth_items;
    s.avg_degree = cfg.synth_avg_degree;
    s.homophily_strength = cfg.synth_homophily;
    s.latent_dim = cfg.synth_latent_dim;
    s.positives_per_user = cfg.synth_positives_per_user;
    s.feature_noise = cfg.synth_feature_noise;
    s.rng_seed = derive_seed(cfg.seed, "synth");
    return s;
}

SplitSpec make_split_spec(const RunConfig& cfg) {
    return {cfg.test_fraction, cfg.validation_fraction, derive_seed(cfg.seed, "split")};
}

TrainConfig make_train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.learning_rate = static_cast<Real>(cfg.learning_rate);
    t.batch_size = cfg.batch_size;
    t.neg_samples_per_pos = cfg.neg_samples_per_pos;
    t.lambda = static_cast<Real>(cfg.lambda);
    t.max_epochs = cfg.max_epochs;
    t.early_stop_patience = cfg.early_stop_patience;
    t.val_num_negatives = cfg.val_num_negatives;
    t.rng_seed = cfg.seed;
    return t;
}

EvalConfig make_eval_config(const RunConfig& cfg) {
    EvalConfig e;
    e.top_n = cfg.top_n;
    e.num_sampled_negatives = cfg.num_sampled_negatives;
    e.num_repetitions = cfg.num_repetitions;
    e.rng_seed = derive_seed(cfg.seed, "eval");
    return e;
}

Dataset load_or_synthesize(const RunConfig& cfg) {
    if (cfg.ratings_path.empty()) return synthesize(make_synth_config(cfg));
    std::optional<std::filesystem::path> uf, itf;
    if (!cfg.user_features_path.empty()) uf = cfg.user_features_path;
    if (!cfg.item_features_path.empty()) itf = cfg.item_features_path;
    return load_dataset(cfg.ratings_path, cfg.trust_path, uf, itf);
}

DiffNetConfig resolve_net_config(const RunConfig& cfg, const Dataset& data) {
    DiffNetConfig net;
    net.embed_dim = cfg.embed_dim;
    net.depth = cfg.depth;
    net.pooling = pooling_from_string(cfg.pooling);
    net.fusion_activation = activation_from_string(cfg.fusion_activation);
    net.diffusion_activations.assign(static_cast<std::size_t>(std::max(cfg.depth, 0)),
                                     activation_from_string(cfg.diffusion_activation));
    auto tri = [&](const char* key, const std::string& v, bool available) {
        if (v == "auto") return available;
        if (v == "true" && !available)
            throw ConfigError(std::string(key) + ": dataset provides no such features");
        return v == "true";
    };
    net.use_user_features = tri("use_user_features", cfg.use_user_features,
                                data.has_user_features());
    net.use_item_features = tri("use_item_features", cfg.use_item_features,
                                data.has_item_features());
    net.use_free_user_embed = cfg.use_free_user_embed;
    net.use_free_item_embed = cfg.use_free_item_embed;
    net.use_batchnorm = cfg.use_batchnorm;
    net.empty_neighbor_policy = neighbor_policy_from_string(cfg.empty_neighbor_policy);
    net.exclude_target_item = cfg.exclude_target_item;
    net.validate();
    return net;
}

}  // namespace diffnet
