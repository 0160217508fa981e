#include "diffnet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "diffnet/log.hpp"
#include "diffnet/rng.hpp"
#include "diffnet/textio.hpp"

namespace diffnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// textio

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("write failed for " + path.string());
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_text_file(tmp, content);
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Dataset accessors

std::span<const std::int32_t> Dataset::items_of(std::int32_t user) const {
    return interactions[static_cast<std::size_t>(user)];
}

std::span<const std::int32_t> Dataset::trusted_of(std::int32_t user) const {
    return trust_out[static_cast<std::size_t>(user)];
}

bool Dataset::rated(std::int32_t user, std::int32_t item) const {
    auto items = items_of(user);
    return std::binary_search(items.begin(), items.end(), item);
}

std::size_t Dataset::total_trust_edges() const {
    std::size_t n = 0;
    for (const auto& t : trust_out) n += t.size();
    return n;
}

std::int32_t Dataset::find_user(std::string_view original_id) const {
    for (std::size_t i = 0; i < user_ids.size(); ++i)
        if (user_ids[i] == original_id) return static_cast<std::int32_t>(i);
    return -1;
}

std::int32_t Dataset::find_item(std::string_view original_id) const {
    for (std::size_t i = 0; i < item_ids.size(); ++i)
        if (item_ids[i] == original_id) return static_cast<std::int32_t>(i);
    return -1;
}

void Dataset::check_invariants() const {
    auto fail = [](const std::string& msg) { throw DataError("dataset invariant: " + msg); };
    const auto m = static_cast<std::size_t>(num_users);
    const auto n = static_cast<std::size_t>(num_items);
    if (num_users < 0 || num_items < 0) fail("negative entity count");
    if (interactions.size() != m) fail("interactions list count != num_users");
    if (trust_out.size() != m) fail("trust list count != num_users");
    if (user_ids.size() != m || item_ids.size() != n) fail("original id count mismatch");

    std::size_t total = 0;
    for (std::size_t u = 0; u < m; ++u) {
        const auto& items = interactions[u];
        total += items.size();
        for (std::size_t k = 0; k < items.size(); ++k) {
            if (items[k] < 0 || items[k] >= num_items) fail("item id out of range");
            if (k > 0 && items[k - 1] >= items[k]) fail("interaction list not sorted unique");
        }
        const auto& t = trust_out[u];
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (t[k] < 0 || t[k] >= num_users) fail("trusted user id out of range");
            if (t[k] == static_cast<std::int32_t>(u)) fail("self edge in trust graph");
            if (k > 0 && t[k - 1] >= t[k]) fail("trust list not sorted unique");
        }
    }
    if (total != num_interactions) fail("num_interactions does not match lists");

    if (has_user_features() && user_features.rows() != m)
        fail("user feature rows != num_users");
    if (has_item_features() && item_features.rows() != n)
        fail("item feature rows != num_items");
    if (has_user_features() && !user_features.all_finite()) fail("non-finite user feature");
    if (has_item_features() && !item_features.all_finite()) fail("non-finite item feature");
}

// ---------------------------------------------------------------------------
// parsing helpers

namespace {

struct Line {
    std::string text;
    std::size_t number = 0;
};

// whole-file line iteration; strips trailing \r, skips blank and '#' lines
std::vector<Line> read_lines(const fs::path& path) {
    std::string content = read_text_file(path);
    std::vector<Line> lines;
    std::size_t lineno = 0, pos = 0;
    while (pos <= content.size()) {
        std::size_t nl = content.find('\n', pos);
        std::string_view sv;
        if (nl == std::string::npos) {
            if (pos == content.size()) break;
            sv = std::string_view(content).substr(pos);
            pos = content.size() + 1;
        } else {
            sv = std::string_view(content).substr(pos, nl - pos);
            pos = nl + 1;
        }
        ++lineno;
        if (!sv.empty() && sv.back() == '\r') sv.remove_suffix(1);
        if (sv.empty() || sv.front() == '#') continue;
        lines.push_back({std::string(sv), lineno});
    }
    return lines;
}

[[noreturn]] void line_error(const fs::path& path, std::size_t lineno, const std::string& msg) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
}

double parse_real(std::string_view sv, const fs::path& path, std::size_t lineno) {
    double v = 0;
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (ec != std::errc() || p != sv.data() + sv.size())
        line_error(path, lineno, "bad number '" + std::string(sv) + "'");
    return v;
}

std::int64_t parse_int(std::string_view sv, const fs::path& path, std::size_t lineno) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (ec != std::errc() || p != sv.data() + sv.size())
        line_error(path, lineno, "bad integer '" + std::string(sv) + "'");
    return v;
}

struct IdTable {
    std::unordered_map<std::string, std::int32_t> map;
    std::vector<std::string>* names;

    std::int32_t intern(std::string_view id) {
        auto it = map.find(std::string(id));
        if (it != map.end()) return it->second;
        auto dense = static_cast<std::int32_t>(names->size());
        names->emplace_back(id);
        map.emplace(std::string(id), dense);
        return dense;
    }
    std::int32_t lookup(std::string_view id) const {
        auto it = map.find(std::string(id));
        return it == map.end() ? -1 : it->second;
    }
};

void sort_unique_warn(std::vector<std::int32_t>& v, std::size_t* dup_count) {
    std::sort(v.begin(), v.end());
    auto last = std::unique(v.begin(), v.end());
    if (dup_count) *dup_count += static_cast<std::size_t>(v.end() - last);
    v.erase(last, v.end());
}

// feature files: "<dim>\t<count>" header then "<id>\t<v1>,<v2>,..." rows
Matrix load_features(const fs::path& path, IdTable& ids, const char* entity) {
    auto lines = read_lines(path);
    if (lines.empty()) throw DataError(path.string() + ": empty feature file");
    auto header = split_on(lines[0].text, '\t');
    if (header.size() != 2) line_error(path, lines[0].number, "expected '<dim>\\t<count>' header");
    auto dim = parse_int(header[0], path, lines[0].number);
    auto count = parse_int(header[1], path, lines[0].number);
    if (dim < 1) line_error(path, lines[0].number, "feature dim must be positive");
    if (count != static_cast<std::int64_t>(lines.size()) - 1)
        line_error(path, lines[0].number,
                   "header promises " + std::to_string(count) + " rows, file has " +
                       std::to_string(lines.size() - 1));

    std::vector<std::pair<std::int32_t, std::vector<double>>> rows;
    rows.reserve(lines.size() - 1);
    std::unordered_set<std::int32_t> seen;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        auto fields = split_on(lines[k].text, '\t');
        if (fields.size() != 2 || fields[0].empty())
            line_error(path, lines[k].number, "expected '<id>\\t<v1>,<v2>,...'");
        std::int32_t dense = ids.intern(fields[0]);
        if (!seen.insert(dense).second)
            line_error(path, lines[k].number,
                       "duplicate feature row for id '" + std::string(fields[0]) + "'");
        auto values = split_on(fields[1], ',');
        if (static_cast<std::int64_t>(values.size()) != dim)
            line_error(path, lines[k].number,
                       "row has " + std::to_string(values.size()) + " values, header says " +
                           std::to_string(dim));
        std::vector<double> v(values.size());
        for (std::size_t j = 0; j < values.size(); ++j)
            v[j] = parse_real(values[j], path, lines[k].number);
        rows.emplace_back(dense, std::move(v));
    }

    Matrix out(ids.names->size(), static_cast<std::size_t>(dim));
    for (auto& [dense, v] : rows)
        for (std::size_t j = 0; j < v.size(); ++j)
            out(static_cast<std::size_t>(dense), j) = static_cast<Real>(v[j]);

    std::size_t missing = ids.names->size() - rows.size();
    if (missing > 0)
        logging::warn("%s: %zu %s(s) have no feature row, using zeros", path.string().c_str(),
                      missing, entity);
    return out;
}

Dataset make_sub_dataset(const Dataset& full,
                         std::vector<std::vector<std::int32_t>> interactions) {
    Dataset d;
    d.num_users = full.num_users;
    d.num_items = full.num_items;
    d.interactions = std::move(interactions);
    d.trust_out = full.trust_out;
    d.user_features = full.user_features;
    d.item_features = full.item_features;
    d.user_ids = full.user_ids;
    d.item_ids = full.item_ids;
    d.num_interactions = 0;
    for (auto& items : d.interactions) {
        std::sort(items.begin(), items.end());
        d.num_interactions += items.size();
    }
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// load / save

Dataset load_dataset(const fs::path& ratings_file, const fs::path& trust_file,
                     const std::optional<fs::path>& user_features_file,
                     const std::optional<fs::path>& item_features_file) {
    Dataset d;
    IdTable users{{}, &d.user_ids};
    IdTable items{{}, &d.item_ids};

    std::vector<std::vector<std::int32_t>> inter;
    for (const auto& line : read_lines(ratings_file)) {
        auto fields = split_on(line.text, '\t');
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
            line_error(ratings_file, line.number, "expected '<user>\\t<item>'");
        std::int32_t u = users.intern(fields[0]);
        std::int32_t i = items.intern(fields[1]);
        if (inter.size() <= static_cast<std::size_t>(u)) inter.resize(u + 1);
        inter[static_cast<std::size_t>(u)].push_back(i);
    }

    std::vector<std::vector<std::int32_t>> trust;
    std::size_t self_edges = 0;
    for (const auto& line : read_lines(trust_file)) {
        auto fields = split_on(line.text, '\t');
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
            line_error(trust_file, line.number, "expected '<truster>\\t<trustee>'");
        std::int32_t a = users.intern(fields[0]);
        std::int32_t b = users.intern(fields[1]);
        if (a == b) {
            ++self_edges;
            continue;
        }
        if (trust.size() <= static_cast<std::size_t>(std::max(a, b))) trust.resize(std::max(a, b) + 1);
        trust[static_cast<std::size_t>(a)].push_back(b);
    }
    if (self_edges > 0)
        logging::warn("%s: dropped %zu self edge(s)", trust_file.string().c_str(), self_edges);

    if (user_features_file) d.user_features = load_features(*user_features_file, users, "user");
    if (item_features_file) d.item_features = load_features(*item_features_file, items, "item");

    d.num_users = static_cast<std::int32_t>(d.user_ids.size());
    d.num_items = static_cast<std::int32_t>(d.item_ids.size());
    inter.resize(d.user_ids.size());
    trust.resize(d.user_ids.size());

    std::size_t dup_ratings = 0, dup_edges = 0;
    for (auto& v : inter) sort_unique_warn(v, &dup_ratings);
    for (auto& v : trust) sort_unique_warn(v, &dup_edges);
    if (dup_ratings > 0)
        logging::warn("%s: %zu duplicate interaction(s) collapsed",
                      ratings_file.string().c_str(), dup_ratings);
    if (dup_edges > 0)
        logging::warn("%s: %zu duplicate trust edge(s) collapsed", trust_file.string().c_str(),
                      dup_edges);

    // feature matrices may have grown the entity tables after construction
    auto pad_rows = [](Matrix& m, std::size_t rows) {
        if (m.empty() || m.rows() == rows) return;
        Matrix grown(rows, m.cols());
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) grown(r, c) = m(r, c);
        m = std::move(grown);
    };
    pad_rows(d.user_features, d.user_ids.size());
    pad_rows(d.item_features, d.item_ids.size());

    d.interactions = std::move(inter);
    d.trust_out = std::move(trust);
    d.num_interactions = 0;
    for (const auto& v : d.interactions) d.num_interactions += v.size();

    d.check_invariants();
    logging::info("loaded %d users, %d items, %zu interactions, %zu trust edges", d.num_users,
                  d.num_items, d.num_interactions, d.total_trust_edges());
    return d;
}

void save_dataset(const Dataset& data, const fs::path& dir) {
    data.check_invariants();
    fs::create_directories(dir);

    std::string ratings;
    for (std::int32_t u = 0; u < data.num_users; ++u)
        for (std::int32_t i : data.items_of(u)) {
            ratings += data.user_ids[static_cast<std::size_t>(u)];
            ratings += '\t';
            ratings += data.item_ids[static_cast<std::size_t>(i)];
            ratings += '\n';
        }
    write_text_file(dir / "ratings.tsv", ratings);

    std::string trust;
    for (std::int32_t u = 0; u < data.num_users; ++u)
        for (std::int32_t t : data.trusted_of(u)) {
            trust += data.user_ids[static_cast<std::size_t>(u)];
            trust += '\t';
            trust += data.user_ids[static_cast<std::size_t>(t)];
            trust += '\n';
        }
    write_text_file(dir / "trust.tsv", trust);

    auto write_features = [&](const Matrix& m, const std::vector<std::string>& ids,
                              const fs::path& file) {
        std::string out = std::to_string(m.cols()) + "\t" + std::to_string(m.rows()) + "\n";
        for (std::size_t r = 0; r < m.rows(); ++r) {
            out += ids[r];
            out += '\t';
            for (std::size_t c = 0; c < m.cols(); ++c) {
                if (c > 0) out += ',';
                out += format_g17(static_cast<double>(m(r, c)));
            }
            out += '\n';
        }
        write_text_file(file, out);
    };
    if (data.has_user_features())
        write_features(data.user_features, data.user_ids, dir / "user_features.tsv");
    if (data.has_item_features())
        write_features(data.item_features, data.item_ids, dir / "item_features.tsv");
}

// ---------------------------------------------------------------------------
// split

void SplitSpec::validate() const {
    if (test_fraction < 0 || validation_fraction < 0 ||
        test_fraction + validation_fraction >= 1.0)
        throw ConfigError(
            "test_fraction/validation_fraction: must be non-negative and sum below 1");
}

DataSplit split(const Dataset& data, const SplitSpec& spec) {
    spec.validate();

    std::vector<std::pair<std::int32_t, std::int32_t>> all;
    all.reserve(data.num_interactions);
    for (std::int32_t u = 0; u < data.num_users; ++u)
        for (std::int32_t i : data.items_of(u)) all.emplace_back(u, i);

    Rng rng(spec.rng_seed);
    rng.shuffle(all);

    const double n = static_cast<double>(all.size());
    // +1e-9 guards representational error in n * fraction
    auto n_test = static_cast<std::size_t>(std::floor(n * spec.test_fraction + 1e-9));
    auto n_val = static_cast<std::size_t>(std::floor(n * spec.validation_fraction + 1e-9));

    const auto m = static_cast<std::size_t>(data.num_users);
    std::vector<std::vector<std::int32_t>> train(m), val(m), test(m);
    for (std::size_t k = 0; k < all.size(); ++k) {
        auto [u, i] = all[k];
        if (k < n_test)
            test[static_cast<std::size_t>(u)].push_back(i);
        else if (k < n_test + n_val)
            val[static_cast<std::size_t>(u)].push_back(i);
        else
            train[static_cast<std::size_t>(u)].push_back(i);
    }

    // a user must keep at least one training positive; otherwise everything
    // they have returns to train
    std::size_t fallbacks = 0;
    for (std::size_t u = 0; u < m; ++u) {
        if (!train[u].empty()) continue;
        if (val[u].empty() && test[u].empty()) continue;
        for (std::int32_t i : val[u]) train[u].push_back(i);
        for (std::int32_t i : test[u]) train[u].push_back(i);
        val[u].clear();
        test[u].clear();
        ++fallbacks;
    }
    if (fallbacks > 0)
        logging::warn("split: %zu user(s) had no training share, kept all their interactions in train",
                      fallbacks);

    DataSplit out;
    out.train = make_sub_dataset(data, std::move(train));
    out.validation = make_sub_dataset(data, std::move(val));
    out.test = make_sub_dataset(data, std::move(test));
    return out;
}

// ---------------------------------------------------------------------------
// synthetic data

void SynthConfig::validate() const {
    if (num_users < 1) throw ConfigError("synth_users: must be at least 1");
    if (num_items < 1) throw ConfigError("synth_items: must be at least 1");
    if (avg_degree < 0) throw ConfigError("synth_avg_degree: must be non-negative");
    if (homophily_strength < 0 || homophily_strength > 1)
        throw ConfigError("synth_homophily: must be in [0, 1]");
    if (latent_dim < 1) throw ConfigError("synth_latent_dim: must be at least 1");
    if (positives_per_user < 1 || positives_per_user > num_items)
        throw ConfigError("synth_positives_per_user: must be in [1, synth_items]");
    if (feature_noise < 0) throw ConfigError("synth_feature_noise: must be non-negative");
}

Dataset synthesize(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.rng_seed);

    const auto m = static_cast<std::size_t>(cfg.num_users);
    const auto n = static_cast<std::size_t>(cfg.num_items);
    const auto latent = static_cast<std::size_t>(cfg.latent_dim);

    // trust edges point at earlier users, chosen preferentially by in-degree.
    // The graph is therefore cycle-free and taste vectors are computable in
    // one ascending pass.
    std::vector<std::vector<std::int32_t>> trust(m);
    std::vector<std::size_t> in_degree(m, 0);
    const auto base_deg = static_cast<std::size_t>(std::floor(cfg.avg_degree));
    const double extra_prob = cfg.avg_degree - std::floor(cfg.avg_degree);
    for (std::size_t u = 1; u < m; ++u) {
        std::size_t want = base_deg + (rng.uniform() < extra_prob ? 1 : 0);
        want = std::min(want, u);
        auto& chosen = trust[u];
        while (chosen.size() < want) {
            double total = 0;
            for (std::size_t t = 0; t < u; ++t) total += static_cast<double>(in_degree[t] + 1);
            double r = rng.uniform() * total;
            std::size_t pick = u - 1;
            for (std::size_t t = 0; t < u; ++t) {
                r -= static_cast<double>(in_degree[t] + 1);
                if (r < 0) {
                    pick = t;
                    break;
                }
            }
            auto p32 = static_cast<std::int32_t>(pick);
            if (std::find(chosen.begin(), chosen.end(), p32) != chosen.end()) continue;
            chosen.push_back(p32);
            ++in_degree[pick];
        }
        std::sort(chosen.begin(), chosen.end());
    }

    Matrix item_vec(n, latent);
    const Real inv_sqrt_l = Real(1) / std::sqrt(static_cast<Real>(latent));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < latent; ++l)
            item_vec(i, l) = static_cast<Real>(rng.normal()) * inv_sqrt_l;

    Matrix base(m, latent);
    for (std::size_t u = 0; u < m; ++u)
        for (std::size_t l = 0; l < latent; ++l)
            base(u, l) = static_cast<Real>(rng.normal()) * inv_sqrt_l;

    // planted taste: own base blended with the mean of trusted users' tastes
    Matrix taste(m, latent);
    const auto alpha = static_cast<Real>(cfg.homophily_strength);
    for (std::size_t u = 0; u < m; ++u) {
        if (trust[u].empty()) {
            for (std::size_t l = 0; l < latent; ++l) taste(u, l) = base(u, l);
            continue;
        }
        for (std::size_t l = 0; l < latent; ++l) {
            Real s = 0;
            for (std::int32_t t : trust[u]) s += taste(static_cast<std::size_t>(t), l);
            s /= static_cast<Real>(trust[u].size());
            taste(u, l) = (Real(1) - alpha) * base(u, l) + alpha * s;
        }
    }

    // positives: the top items by planted affinity, ties to the lower id
    std::vector<std::vector<std::int32_t>> inter(m);
    std::vector<std::pair<Real, std::int32_t>> scored(n);
    for (std::size_t u = 0; u < m; ++u) {
        for (std::size_t i = 0; i < n; ++i)
            scored[i] = {dot(taste.row(u), item_vec.row(i)), static_cast<std::int32_t>(i)};
        auto k = static_cast<std::size_t>(cfg.positives_per_user);
        std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        auto& items = inter[u];
        items.reserve(k);
        for (std::size_t j = 0; j < k; ++j) items.push_back(scored[j].second);
        std::sort(items.begin(), items.end());
    }

    const auto noise = static_cast<Real>(cfg.feature_noise);
    Matrix user_feat(m, latent);
    for (std::size_t u = 0; u < m; ++u)
        for (std::size_t l = 0; l < latent; ++l)
            user_feat(u, l) = taste(u, l) + noise * static_cast<Real>(rng.normal());
    Matrix item_feat(n, latent);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < latent; ++l)
            item_feat(i, l) = item_vec(i, l) + noise * static_cast<Real>(rng.normal());

    Dataset d;
    d.num_users = cfg.num_users;
    d.num_items = cfg.num_items;
    d.interactions = std::move(inter);
    d.trust_out = std::move(trust);
    d.user_features = std::move(user_feat);
    d.item_features = std::move(item_feat);
    d.user_ids.reserve(m);
    for (std::size_t u = 0; u < m; ++u) d.user_ids.push_back(std::to_string(u));
    d.item_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) d.item_ids.push_back(std::to_string(i));
    d.num_interactions = m * static_cast<std::size_t>(cfg.positives_per_user);
    d.check_invariants();
    return d;
}

// ---------------------------------------------------------------------------
// sparsity buckets

static void check_boundaries(std::span<const std::int64_t> boundaries) {
    for (std::size_t k = 0; k < boundaries.size(); ++k) {
        if (boundaries[k] < 1)
            throw ConfigError("bucket_boundaries: values must be positive");
        if (k > 0 && boundaries[k] <= boundaries[k - 1])
            throw ConfigError("bucket_boundaries: values must be strictly increasing");
    }
}

std::vector<std::int32_t> bucket_users(const Dataset& train,
                                       std::span<const std::int64_t> boundaries) {
    check_boundaries(boundaries);
    std::vector<std::int32_t> out(static_cast<std::size_t>(train.num_users));
    for (std::int32_t u = 0; u < train.num_users; ++u) {
        auto count = static_cast<std::int64_t>(train.items_of(u).size());
        auto it = std::upper_bound(boundaries.begin(), boundaries.end(), count);
        out[static_cast<std::size_t>(u)] = static_cast<std::int32_t>(it - boundaries.begin());
    }
    return out;
}

std::vector<std::string> bucket_labels(std::span<const std::int64_t> boundaries) {
    check_boundaries(boundaries);
    std::vector<std::string> labels;
    std::int64_t lo = 0;
    for (std::int64_t b : boundaries) {
        labels.push_back("[" + std::to_string(lo) + "," + std::to_string(b) + ")");
        lo = b;
    }
    labels.push_back("[" + std::to_string(lo) + ",∞)");
    return labels;
}

// ---------------------------------------------------------------------------
// split manifests

void save_split_manifest(const DataSplit& split, const fs::path& file) {
    std::string out;
    auto emit = [&](const Dataset& d, const char* tag) {
        for (std::int32_t u = 0; u < d.num_users; ++u)
            for (std::int32_t i : d.items_of(u)) {
                out += d.user_ids[static_cast<std::size_t>(u)];
                out += '\t';
                out += d.item_ids[static_cast<std::size_t>(i)];
                out += '\t';
                out += tag;
                out += '\n';
            }
    };
    emit(split.train, "train");
    emit(split.validation, "validation");
    emit(split.test, "test");
    write_text_file(file, out);
}

DataSplit apply_split_manifest(const Dataset& full, const fs::path& file) {
    std::unordered_map<std::string, std::int32_t> users, items;
    for (std::size_t k = 0; k < full.user_ids.size(); ++k)
        users.emplace(full.user_ids[k], static_cast<std::int32_t>(k));
    for (std::size_t k = 0; k < full.item_ids.size(); ++k)
        items.emplace(full.item_ids[k], static_cast<std::int32_t>(k));

    const auto m = static_cast<std::size_t>(full.num_users);
    std::vector<std::vector<std::int32_t>> train(m), val(m), test(m);
    std::size_t covered = 0;
    for (const auto& line : read_lines(file)) {
        auto fields = split_on(line.text, '\t');
        if (fields.size() != 3)
            line_error(file, line.number, "expected '<user>\\t<item>\\t<split>'");
        auto uit = users.find(std::string(fields[0]));
        if (uit == users.end())
            line_error(file, line.number, "unknown user '" + std::string(fields[0]) + "'");
        auto iit = items.find(std::string(fields[1]));
        if (iit == items.end())
            line_error(file, line.number, "unknown item '" + std::string(fields[1]) + "'");
        if (!full.rated(uit->second, iit->second))
            line_error(file, line.number, "pair is not an interaction of the dataset");
        auto u = static_cast<std::size_t>(uit->second);
        if (fields[2] == "train")
            train[u].push_back(iit->second);
        else if (fields[2] == "validation")
            val[u].push_back(iit->second);
        else if (fields[2] == "test")
            test[u].push_back(iit->second);
        else
            line_error(file, line.number, "unknown split tag '" + std::string(fields[2]) + "'");
        ++covered;
    }
    if (covered != full.num_interactions)
        throw DataError(file.string() + ": manifest covers " + std::to_string(covered) +
                        " interactions, dataset has " + std::to_string(full.num_interactions));

    // with the count verified, a pair assigned twice means another is missing
    for (std::size_t u = 0; u < m; ++u) {
        std::vector<std::int32_t> all;
        all.reserve(train[u].size() + val[u].size() + test[u].size());
        all.insert(all.end(), train[u].begin(), train[u].end());
        all.insert(all.end(), val[u].begin(), val[u].end());
        all.insert(all.end(), test[u].begin(), test[u].end());
        std::sort(all.begin(), all.end());
        if (std::adjacent_find(all.begin(), all.end()) != all.end())
            throw DataError(file.string() + ": manifest repeats interactions of user '" +
                            full.user_ids[u] + "'");
    }

    DataSplit out;
    out.train = make_sub_dataset(full, std::move(train));
    out.validation = make_sub_dataset(full, std::move(val));
    out.test = make_sub_dataset(full, std::move(test));
    out.train.check_invariants();
    out.validation.check_invariants();
    out.test.check_invariants();
    return out;
}

}  // namespace diffnet
