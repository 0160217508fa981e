#include <unistd.h>

#include <cstdio>
#include <string>
#include <vector>

#include "diffnet/checkpoint.hpp"
#include "diffnet/cli.hpp"
#include "diffnet/dataset.hpp"
#include "diffnet/error.hpp"
#include "diffnet/textio.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace diffnet;
using testutil::TempDir;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"diffnet"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

// Redirects this process's stdout into a file for the duration; finish()
// restores it and returns what was written.
class CaptureStdout {
public:
    explicit CaptureStdout(std::string path) : path_(std::move(path)) {
        std::fflush(stdout);
        saved_ = dup(fileno(stdout));
        REQUIRE(saved_ >= 0);
        REQUIRE(std::freopen(path_.c_str(), "w", stdout) != nullptr);
    }
    std::string finish() {
        restore();
        return read_text_file(path_);
    }
    ~CaptureStdout() { restore(); }

private:
    void restore() {
        if (saved_ < 0) return;
        std::fflush(stdout);
        dup2(saved_, fileno(stdout));
        close(saved_);
        saved_ = -1;
    }

    std::string path_;
    int saved_ = -1;
};

// small synthetic run that trains in milliseconds
std::string tiny_config(int max_epochs, int depth = 1) {
    std::string t;
    t += "model = diffnet\nseed = 11\n";
    t += "synth_users = 12\nsynth_items = 24\nsynth_avg_degree = 3\n";
    t += "synth_positives_per_user = 4\nsynth_latent_dim = 4\n";
    t += "embed_dim = 4\ndepth = " + std::to_string(depth) + "\n";
    t += "learning_rate = 0.01\nbatch_size = 64\nneg_samples_per_pos = 2\n";
    t += "max_epochs = " + std::to_string(max_epochs) + "\n";
    t += "early_stop_patience = 0\nval_num_negatives = 15\n";
    t += "top_n = 5,10\nnum_sampled_negatives = 15\nnum_repetitions = 2\n";
    return t;
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("train emits a checkpoint, one log line per epoch, and the split manifest") {
    TempDir tmp("cli_train");
    write_text_file(tmp.file("run.cfg"), tiny_config(2));
    const std::string out_dir = tmp.file("out");

    CaptureStdout cap(tmp.file("stdout.txt"));
    int rc = run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", out_dir});
    std::string printed = cap.finish();

    CHECK(rc == 0);
    CHECK(printed.find("checkpoint: ") != std::string::npos);
    CHECK(printed.find("config digest: ") != std::string::npos);

    Checkpoint ck = load_checkpoint(out_dir + "/checkpoint.bin");
    CHECK(ck.model_kind == "diffnet");
    CHECK(ck.epoch_cursor == 2);
    CHECK(ck.config_text.find("embed_dim = 4") != std::string::npos);

    const std::string log = read_text_file(out_dir + "/train_log.tsv");
    CHECK(count_lines(log) == 2);
    CHECK(log.find("1\t") == 0);

    CHECK(count_lines(read_text_file(out_dir + "/split_manifest.tsv")) > 0);
}

TEST_CASE("resuming reproduces a straight run and rejects mismatched configs") {
    TempDir tmp("cli_resume");
    write_text_file(tmp.file("run.cfg"), tiny_config(2));
    const std::string straight = tmp.file("straight");
    const std::string stepped = tmp.file("stepped");

    CaptureStdout cap(tmp.file("stdout.txt"));
    REQUIRE(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", straight,
                     "--max_epochs", "4"}) == 0);

    REQUIRE(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", stepped}) == 0);
    REQUIRE(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", stepped,
                     "--resume_from", stepped + "/checkpoint.bin", "--max_epochs", "4"}) == 0);
    cap.finish();

    CHECK(read_text_file(stepped + "/train_log.tsv") ==
          read_text_file(straight + "/train_log.tsv"));
    CHECK(load_checkpoint(stepped + "/checkpoint.bin").epoch_cursor == 4);

    // the two checkpoints carry identical parameters; only out_dir differs
    Checkpoint a = load_checkpoint(straight + "/checkpoint.bin");
    Checkpoint b = load_checkpoint(stepped + "/checkpoint.bin");
    CHECK(a.tensors == b.tensors);

    // a substantive config change must not silently retarget the run
    CHECK(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", stepped,
                   "--resume_from", stepped + "/checkpoint.bin", "--max_epochs", "6",
                   "--embed_dim", "8"}) == 2);
}

TEST_CASE("evaluate writes byte-stable result tables") {
    TempDir tmp("cli_eval");
    write_text_file(tmp.file("run.cfg"), tiny_config(2));
    const std::string out_dir = tmp.file("out");

    CaptureStdout cap(tmp.file("stdout.txt"));
    REQUIRE(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", out_dir}) == 0);
    const std::string ck = out_dir + "/checkpoint.bin";

    CHECK(run_cli({"evaluate", "--checkpoint", ck, "--out", tmp.file("r1.tsv")}) == 0);
    CHECK(run_cli({"evaluate", "--checkpoint", ck, "--out", tmp.file("r2.tsv")}) == 0);
    CHECK(run_cli({"evaluate", "--checkpoint", ck}) == 0);  // default target
    cap.finish();

    const std::string r1 = read_text_file(tmp.file("r1.tsv"));
    CHECK(r1 == read_text_file(tmp.file("r2.tsv")));
    CHECK(r1 == read_text_file(out_dir + "/results.tsv"));
    CHECK(r1.find("# config_digest=") == 0);
    CHECK(r1.find("model\tmetric\tn\tgroup\trepetition\tvalue\n") != std::string::npos);
    CHECK(r1.find("diffnet\thr\t5\toverall\t1\t") != std::string::npos);
    CHECK(r1.find("\tmean\t") != std::string::npos);
}

TEST_CASE("recommend ranks unrated items and refuses unknown users") {
    TempDir tmp("cli_rec");
    write_text_file(tmp.file("run.cfg"), tiny_config(1));
    const std::string out_dir = tmp.file("out");

    {
        CaptureStdout cap(tmp.file("train_out.txt"));
        REQUIRE(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", out_dir}) == 0);
    }
    const std::string ck = out_dir + "/checkpoint.bin";

    CaptureStdout cap(tmp.file("rec.txt"));
    int rc = run_cli({"recommend", "--checkpoint", ck, "--user", "0", "--top-n", "3"});
    const std::string out = cap.finish();
    CHECK(rc == 0);
    REQUIRE(count_lines(out) == 3);
    CHECK(out.find("1\t") == 0);

    // scores arrive best first
    std::vector<double> scores;
    std::size_t pos = 0;
    while (pos < out.size()) {
        std::size_t eol = out.find('\n', pos);
        std::string line = out.substr(pos, eol - pos);
        scores.push_back(std::stod(line.substr(line.rfind('\t') + 1)));
        pos = eol + 1;
    }
    REQUIRE(scores.size() == 3);
    CHECK(scores[0] >= scores[1]);
    CHECK(scores[1] >= scores[2]);

    CaptureStdout cap_empty(tmp.file("rec0.txt"));
    CHECK(run_cli({"recommend", "--checkpoint", ck, "--user", "0", "--top-n", "0"}) == 0);
    CHECK(cap_empty.finish().empty());

    CHECK(run_cli({"recommend", "--checkpoint", ck, "--user", "nosuch", "--top-n", "3"}) == 2);
}

TEST_CASE("flag overrides beat the config file and unknown keys fail the run") {
    TempDir tmp("cli_override");
    write_text_file(tmp.file("run.cfg"), "seed = 7\n" + tiny_config(1));

    CaptureStdout cap(tmp.file("stdout.txt"));
    REQUIRE(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", tmp.file("a"),
                     "--seed=9"}) == 0);
    cap.finish();
    CHECK(load_checkpoint(tmp.file("a") + "/checkpoint.bin").config_text.find("seed = 9") !=
          std::string::npos);

    CHECK(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", tmp.file("b"),
                   "--bogus", "1"}) == 2);
    CHECK(run_cli({"train", "--config", tmp.file("nonexistent.cfg")}) == 2);
}

TEST_CASE("usage errors and help use the documented exit codes") {
    TempDir tmp("cli_usage");
    CaptureStdout cap(tmp.file("stdout.txt"));
    CHECK(run_cli({}) == 1);
    CHECK(run_cli({"frobnicate"}) == 1);
    CHECK(run_cli({"evaluate"}) == 1);  // --checkpoint is required
    CHECK(run_cli({"--help"}) == 0);
    cap.finish();
}

TEST_CASE("synth writes a dataset the loader round-trips") {
    TempDir tmp("cli_synth");
    write_text_file(tmp.file("run.cfg"), tiny_config(1));
    const std::string dir = tmp.file("data");

    CaptureStdout cap(tmp.file("stdout.txt"));
    int rc = run_cli({"synth", "--config", tmp.file("run.cfg"), "--out", dir});
    const std::string printed = cap.finish();
    CHECK(rc == 0);
    CHECK(printed.find("wrote 12 users, 24 items") != std::string::npos);

    Dataset d = load_dataset(dir + "/ratings.tsv", dir + "/trust.tsv",
                             dir + "/user_features.tsv", dir + "/item_features.tsv");
    CHECK(d.num_users == 12);
    CHECK(d.num_items == 24);
    CHECK(d.num_interactions > 0);
    CHECK(d.user_features.cols() == 4);
}

TEST_CASE("dump-checkpoint prints the stored configuration and tensor table") {
    TempDir tmp("cli_dump");
    write_text_file(tmp.file("run.cfg"), tiny_config(1));
    const std::string out_dir = tmp.file("out");

    {
        CaptureStdout cap(tmp.file("train_out.txt"));
        REQUIRE(run_cli({"train", "--config", tmp.file("run.cfg"), "--out_dir", out_dir}) == 0);
    }
    const std::string ck = out_dir + "/checkpoint.bin";

    CaptureStdout cap(tmp.file("dump.txt"));
    CHECK(run_cli({"dump-checkpoint", "--checkpoint", ck}) == 0);
    const std::string brief = cap.finish();
    CHECK(brief.find("diffnet") != std::string::npos);
    CHECK(brief.find("epoch_cursor=1") != std::string::npos);
    CHECK(brief.find("embed_dim = 4") != std::string::npos);
    CHECK(brief.find("P") != std::string::npos);

    CaptureStdout cap_full(tmp.file("dump_values.txt"));
    CHECK(run_cli({"dump-checkpoint", "--checkpoint", ck, "--values"}) == 0);
    CHECK(cap_full.finish().size() > brief.size());

    CHECK(run_cli({"dump-checkpoint", "--checkpoint", tmp.file("missing.bin")}) == 2);
}

TEST_CASE("ablate sweeps the grid and always reports the baseline cell") {
    TempDir tmp("cli_ablate");
    const std::string base_cfg = tiny_config(1) + "num_repetitions = 1\n";

    SUBCASE("baseline inside the grid") {
        write_text_file(tmp.file("run.cfg"),
                        base_cfg + "ablate_depths = 0,1\nablate_variants = full,p0\n");
        CaptureStdout cap(tmp.file("stdout.txt"));
        int rc = run_cli({"ablate", "--config", tmp.file("run.cfg"), "--out_dir",
                          tmp.file("out")});
        cap.finish();
        CHECK(rc == 0);

        const std::string table = read_text_file(tmp.file("out") + "/ablation.tsv");
        CHECK(count_lines(table) == 6);  // digest + header + 4 cells
        CHECK(table.find("depth\tvariant\thr@10\tndcg@10") != std::string::npos);
        CHECK(table.find("0\tfull\t") != std::string::npos);
        CHECK(table.find("1\tp0\t") != std::string::npos);
        CHECK(table.find("error") == std::string::npos);
        // the baseline compares against itself
        CHECK(table.find("1\tfull\t") != std::string::npos);
        std::size_t row = table.find("1\tfull\t");
        std::string line = table.substr(row, table.find('\n', row) - row);
        CHECK(line.find("\t0\t0\tok") != std::string::npos);
    }

    SUBCASE("baseline outside the grid is prepended") {
        write_text_file(tmp.file("run.cfg"),
                        base_cfg + "ablate_depths = 0\nablate_variants = p0\n");
        CaptureStdout cap(tmp.file("stdout.txt"));
        int rc = run_cli({"ablate", "--config", tmp.file("run.cfg"), "--out_dir",
                          tmp.file("out2")});
        cap.finish();
        CHECK(rc == 0);

        const std::string table = read_text_file(tmp.file("out2") + "/ablation.tsv");
        CHECK(count_lines(table) == 4);  // digest + header + baseline + 1 cell
        CHECK(table.find("1\tfull\t") != std::string::npos);
        CHECK(table.find("0\tp0\t") != std::string::npos);
    }
}
