#include "diffnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "diffnet/textio.hpp"

namespace diffnet {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'F', 'N', 'E', 'T', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string where;

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError(where + ": " + msg);
    }
    void need(std::size_t n) const {
        if (pos + n > buf.size()) fail("truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i)
            x |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i)
            x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return x;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::uint32_t kind_tag(const std::string& kind) {
    if (kind == "diffnet") return 0;
    if (kind == "bpr") return 1;
    if (kind == "svdpp") return 2;
    throw ConfigError("model: unknown kind '" + kind + "' (expected diffnet, bpr or svdpp)");
}

std::string kind_name(std::uint32_t tag) {
    switch (tag) {
        case 0: return "diffnet";
        case 1: return "bpr";
        case 2: return "svdpp";
    }
    throw DataError("checkpoint: unknown model-kind tag " + std::to_string(tag));
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    std::string out;
    out.append(kMagic, sizeof kMagic);
    put_u32(out, ck.version);
    put_u32(out, kind_tag(ck.model_kind));
    put_u32(out, static_cast<std::uint32_t>(ck.config_text.size()));
    out += ck.config_text;
    put_u64(out, ck.epoch_cursor);
    put_u64(out, ck.rng_state);
    put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& e : ck.tensors) {
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        put_u32(out, 2);
        put_u64(out, e.value.rows());
        put_u64(out, e.value.cols());
        for (Real x : e.value.flat()) put_f64(out, static_cast<double>(x));
    }
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string buf = read_text_file(path);
    Reader r{buf, 0, path.string()};

    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
        r.fail("not a checkpoint file (bad magic)");
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != 1) r.fail("unsupported format version " + std::to_string(ck.version));
    ck.model_kind = kind_name(r.u32());
    ck.config_text = r.bytes(r.u32());
    ck.epoch_cursor = r.u64();
    ck.rng_state = r.u64();

    const std::uint32_t count = r.u32();
    for (std::uint32_t t = 0; t < count; ++t) {
        std::string name = r.bytes(r.u32());
        const std::uint32_t rank = r.u32();
        if (rank != 2) r.fail("tensor '" + name + "' has unsupported rank");
        const std::uint64_t rows = r.u64();
        const std::uint64_t cols = r.u64();
        if (rows * cols > (std::uint64_t(1) << 32)) r.fail("tensor '" + name + "' too large");
        Matrix m(rows, cols);
        for (Real& x : m.flat()) x = static_cast<Real>(r.f64());
        ck.tensors.add(std::move(name), std::move(m));
    }
    if (r.pos != buf.size()) r.fail("trailing bytes after tensor data");
    return ck;
}

std::unique_ptr<RankingModel> make_model(const std::string& kind, Dataset train,
                                         const DiffNetConfig& net, std::uint64_t init_seed) {
    kind_tag(kind);  // validates
    if (kind == "diffnet")
        return std::make_unique<DiffNetModel>(std::move(train), net, init_seed);
    if (kind == "bpr")
        return std::make_unique<BprModel>(std::move(train), net.embed_dim, init_seed);
    return std::make_unique<SvdppModel>(std::move(train), net.embed_dim, init_seed);
}

Checkpoint snapshot_model(const RankingModel& model, const std::string& config_text,
                          std::uint64_t epoch_cursor, std::uint64_t rng_state,
                          const AdamState* adam) {
    Checkpoint ck;
    ck.model_kind = model.kind();
    ck.config_text = config_text;
    ck.epoch_cursor = epoch_cursor;
    ck.rng_state = rng_state;
    for (const auto& e : model.params()) ck.tensors.add(e.name, e.value);
    for (const auto& e : model.extra_state()) ck.tensors.add(e.name, e.value);
    if (adam) {
        std::size_t k = 0;
        for (const auto& e : model.params()) {
            ck.tensors.add("adam.m." + e.name, adam->first_moments()[k]);
            ck.tensors.add("adam.v." + e.name, adam->second_moments()[k]);
            ++k;
        }
        Matrix step(1, 1);
        step(0, 0) = static_cast<Real>(adam->steps());
        ck.tensors.add("adam.step", std::move(step));
    }
    return ck;
}

void restore_model(RankingModel& model, const Checkpoint& ck) {
    if (model.kind() != ck.model_kind)
        throw DimError("restore_model: checkpoint kind '" + ck.model_kind +
                       "' does not match model '" + model.kind() + "'");
    for (auto& e : model.params()) {
        const Matrix* src = ck.tensors.find(e.name);
        if (!src) throw DimError("restore_model: checkpoint lacks tensor '" + e.name + "'");
        if (src->rows() != e.value.rows() || src->cols() != e.value.cols())
            throw DimError("restore_model: tensor '" + e.name + "' is " +
                           std::to_string(src->rows()) + "x" + std::to_string(src->cols()) +
                           ", model expects " + std::to_string(e.value.rows()) + "x" +
                           std::to_string(e.value.cols()));
        e.value = *src;
    }
    ParamSet extra = model.extra_state();
    if (!extra.empty()) {
        for (auto& e : extra) {
            const Matrix* src = ck.tensors.find(e.name);
            if (!src) throw DimError("restore_model: checkpoint lacks tensor '" + e.name + "'");
            if (src->rows() != e.value.rows() || src->cols() != e.value.cols())
                throw DimError("restore_model: tensor '" + e.name + "' shape mismatch");
            e.value = *src;
        }
        model.set_extra_state(extra);
    }
    model.refresh();
}

std::optional<AdamState> restore_adam(const Checkpoint& ck, const ParamSet& shapes,
                                      AdamConfig cfg) {
    const Matrix* step = ck.tensors.find("adam.step");
    if (!step) return std::nullopt;
    std::vector<Matrix> m, v;
    for (const auto& e : shapes) {
        const Matrix* mm = ck.tensors.find("adam.m." + e.name);
        const Matrix* vv = ck.tensors.find("adam.v." + e.name);
        if (!mm || !vv)
            throw DimError("restore_adam: checkpoint lacks moments for '" + e.name + "'");
        m.push_back(*mm);
        v.push_back(*vv);
    }
    AdamState state(shapes, cfg);
    state.restore(std::move(m), std::move(v),
                  static_cast<std::int64_t>(std::llround(double((*step)(0, 0)))));
    return state;
}

std::string describe_checkpoint(const Checkpoint& ck, bool with_values) {
    std::string out;
    out += "model=" + ck.model_kind + " version=" + std::to_string(ck.version) +
           " epoch_cursor=" + std::to_string(ck.epoch_cursor) +
           " rng_state=" + std::to_string(ck.rng_state) + "\n";
    out += "config:\n";
    out += ck.config_text;
    if (!ck.config_text.empty() && ck.config_text.back() != '\n') out += '\n';
    out += "tensors:\n";
    for (const auto& e : ck.tensors) {
        double lo = 0, hi = 0, sq = 0;
        bool first = true;
        for (Real x : e.value.flat()) {
            const double d = static_cast<double>(x);
            if (first || d < lo) lo = d;
            if (first || d > hi) hi = d;
            first = false;
            sq += d * d;
        }
        out += "  " + e.name + "  " + std::to_string(e.value.rows()) + "x" +
               std::to_string(e.value.cols()) + "  min=" + format_g17(lo) +
               " max=" + format_g17(hi) + " frob=" + format_g17(std::sqrt(sq)) + "\n";
        if (with_values) {
            for (std::size_t r = 0; r < e.value.rows(); ++r) {
                out += "    ";
                for (std::size_t c = 0; c < e.value.cols(); ++c) {
                    if (c > 0) out += ' ';
                    out += format_g17(static_cast<double>(e.value(r, c)));
                }
                out += '\n';
            }
        }
    }
    return out;
}

}  // namespace diffnet
