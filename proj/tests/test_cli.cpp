// End-to-end checks of the command-line binary: every subcommand is invoked
// as a child process and judged on exit code, streams, and the files it
// leaves behind. The binary path is injected by the build as SOUNDFLOW_CLI_PATH.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "soundflow/features.hpp"
#include "soundflow/manifest.hpp"
#include "soundflow/metrics.hpp"

using namespace soundflow;
namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Runs the CLI with the given arguments inside `dir` (all relative paths in
// the arguments resolve against it) and captures both streams.
CommandResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out_file = dir / "_stdout.txt";
    const fs::path err_file = dir / "_stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && '" + SOUNDFLOW_CLI_PATH + "' " + args +
                            " > '" + out_file.string() + "' 2> '" + err_file.string() + "'";
    const int status = std::system(cmd.c_str());
    CommandResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

const std::string kToyConfig =
    "# toy end-to-end configuration\n"
    "seed = 3\n"
    "schedule = linear\n"
    "mixer.classes = Hum,Tone\n"
    "mixer.clips_per_class = 16\n"
    "mixer.max_events = 2\n"
    "mixer.allow_overlap = false\n"
    "mixer.duration_budget_s = 4.0\n"
    "mixer.max_event_s = 1.2\n"
    "model.num_blocks = 2\n"
    "model.hidden_dim = 64\n"
    "model.num_heads = 2\n"
    "model.max_frames = 100\n"
    "model.time_embed_dim = 16\n"
    "train.batch_size = 4\n"
    "train.steps = 500\n"
    "train.log_every = 50\n"
    "train.checkpoint_every = 0\n"
    "train.crop_frames = 50\n"
    "train.learning_rate = 1e-3\n";

// One dataset + one finished training run, shared by the cases below. Built
// the first time it is needed; removed when the process exits.
struct Workspace {
    fs::path root;
    fs::path config;     // kToyConfig on disk
    fs::path data;       // 200-item synthetic dataset
    fs::path model_dir;  // holds model.acmp after 500 steps
    std::string train_log;

    Workspace() {
        root = fs::temp_directory_path() / "soundflow_cli_tests";
        fs::remove_all(root);
        fs::create_directories(root);
        config = root / "toy.cfg";
        std::ofstream(config) << kToyConfig;

        data = root / "data";
        CommandResult mix = run_cli("mix --config toy.cfg --n 200 --out data", root);
        REQUIRE(mix.exit_code == 0);

        model_dir = root / "model";
        CommandResult train = run_cli("train --config toy.cfg --data data --out model", root);
        REQUIRE(train.exit_code == 0);
        train_log = train.err;
    }
    ~Workspace() { fs::remove_all(root); }
};

const Workspace& workspace() {
    static Workspace ws;
    return ws;
}

// Extracts a named numeric field from a "step N loss L avg A" log line.
std::string logged_token(const std::string& log, int step, const std::string& field) {
    const std::string line_key = "step " + std::to_string(step) + " ";
    const std::size_t line = log.find(line_key);
    REQUIRE(line != std::string::npos);
    const std::size_t end = log.find('\n', line);
    const std::string text = log.substr(line, end - line);
    const std::size_t key = text.find(field + " ");
    REQUIRE(key != std::string::npos);
    std::istringstream rest(text.substr(key + field.size() + 1));
    std::string token;
    rest >> token;
    return token;
}

double logged_value(const std::string& log, int step, const std::string& field) {
    return std::stod(logged_token(log, step, field));
}

std::size_t count_lines(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

// Histogram lines look like "class Hum 57" or "pitch Low 12 Normal 31 High 9";
// sums every integer that follows the given prefix across all of stdout.
long histogram_sum(const std::string& out, const std::string& prefix) {
    long total = 0;
    std::istringstream lines(out);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.rfind(prefix, 0) != 0) continue;
        std::istringstream words(line);
        std::string word;
        while (words >> word) {
            if (!word.empty() && (std::isdigit(word.front()) != 0)) total += std::stol(word);
        }
    }
    return total;
}

}  // namespace

TEST_CASE("mix is reproducible and reports a histogram that adds up") {
    const Workspace& ws = workspace();

    CommandResult a = run_cli("mix --config toy.cfg --n 100 --seed 7 --out mix_a", ws.root);
    CommandResult b = run_cli("mix --config toy.cfg --n 100 --seed 7 --out mix_b", ws.root);
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(ws.root / "mix_a/manifest.jsonl") == slurp(ws.root / "mix_b/manifest.jsonl"));
    CHECK(slurp(ws.root / "mix_a/dataset.json") == slurp(ws.root / "mix_b/dataset.json"));

    // the summary's class/category histograms all account for every event
    CHECK(a.out.find("items 100") != std::string::npos);
    const std::size_t events_pos = a.out.find("events ");
    REQUIRE(events_pos != std::string::npos);
    const long events = std::stol(a.out.substr(events_pos + 7));
    CHECK(events >= 100);
    CHECK(histogram_sum(a.out, "class ") == events);
    CHECK(histogram_sum(a.out, "pitch ") == events);
    CHECK(histogram_sum(a.out, "energy ") == events);
}

TEST_CASE("mix rejects a zero-item request without touching the filesystem") {
    const Workspace& ws = workspace();
    CommandResult r = run_cli("mix --config toy.cfg --n 0 --out mix_zero", ws.root);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("config error") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.root / "mix_zero"));
}

TEST_CASE("unknown config keys are rejected with their line number") {
    const Workspace& ws = workspace();
    std::ofstream(ws.root / "bad.cfg") << "seed = 1\nbogus.key = 2\n";
    CommandResult r = run_cli("mix --config bad.cfg --n 4 --out bad_out", ws.root);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("line 2") != std::string::npos);
    CHECK(r.err.find("bogus.key") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.root / "bad_out"));
}

TEST_CASE("train halves the logged loss on a 200-item toy run") {
    const Workspace& ws = workspace();
    const double first = logged_value(ws.train_log, 1, "avg");
    const double last = logged_value(ws.train_log, 500, "avg");
    CHECK(first > 1.5);  // fresh model predicts ~0 against unit-variance targets
    CHECK(last < 0.5 * first);
    CHECK(fs::exists(ws.model_dir / "model.acmp"));
}

TEST_CASE("train names the missing manifest and leaves no output behind") {
    const Workspace& ws = workspace();
    CommandResult r = run_cli("train --config toy.cfg --data absent --out train_miss", ws.root);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("absent/manifest.jsonl") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.root / "train_miss"));
}

TEST_CASE("an interrupted training run resumes into the same loss curve") {
    const Workspace& ws = workspace();

    CommandResult half =
        run_cli("train --config toy.cfg --data data --steps 250 --out resume", ws.root);
    REQUIRE(half.exit_code == 0);
    CHECK(half.err.find("resuming") == std::string::npos);

    CommandResult rest =
        run_cli("train --config toy.cfg --data data --steps 500 --out resume", ws.root);
    REQUIRE(rest.exit_code == 0);
    CHECK(rest.err.find("resuming") != std::string::npos);
    CHECK(rest.err.find("step 250") != std::string::npos);  // picks up where it stopped

    // the per-step seed stream makes the stitched run equal the straight one
    CHECK(logged_token(rest.err, 500, "loss") == logged_token(ws.train_log, 500, "loss"));

    CommandResult again =
        run_cli("train --config toy.cfg --data data --steps 500 --out resume", ws.root);
    CHECK(again.exit_code == 0);
    CHECK(again.err.find("already") != std::string::npos);
}

TEST_CASE("sample writes one record per caption, deterministically") {
    const Workspace& ws = workspace();

    // ten captions lifted from the reference manifest
    const Manifest ref = read_manifest(ws.data / "manifest.jsonl");
    REQUIRE(ref.records.size() >= 10);
    std::ofstream caps(ws.root / "caps.txt");
    for (std::size_t i = 0; i < 10; ++i) caps << ref.records[i].caption << "\n";
    caps.close();

    const std::string cmd =
        "sample --config toy.cfg --checkpoint model/model.acmp --captions caps.txt --seed 5";
    CommandResult a = run_cli(cmd + " --out gen_a", ws.root);
    REQUIRE(a.exit_code == 0);
    CHECK(a.out.find("wrote 10 records") != std::string::npos);
    CHECK(count_lines(ws.root / "gen_a/manifest.jsonl") == 10);

    CommandResult b = run_cli(cmd + " --out gen_b", ws.root);
    REQUIRE(b.exit_code == 0);
    CHECK(slurp(ws.root / "gen_a/manifest.jsonl") == slurp(ws.root / "gen_b/manifest.jsonl"));
    const Manifest gen = read_manifest(ws.root / "gen_a/manifest.jsonl");
    CHECK(slurp(ws.root / "gen_a" / gen.records[0].features) ==
          slurp(ws.root / "gen_b" / gen.records[0].features));
}

TEST_CASE("sample survives a single integration step and honors caption ids") {
    const Workspace& ws = workspace();

    std::ofstream caps(ws.root / "caps_tsv.txt");
    caps << "alpha\tHum, Start at 0.2s and End at 0.8s, it has Low Pitch and High Energy.\n";
    caps << "beta\t<unc>\n";
    caps.close();

    CommandResult r = run_cli(
        "sample --config toy.cfg --checkpoint model/model.acmp --captions caps_tsv.txt "
        "--steps 1 --seed 2 --out gen_one",
        ws.root);
    REQUIRE(r.exit_code == 0);

    const Manifest gen = read_manifest(ws.root / "gen_one/manifest.jsonl");
    REQUIRE(gen.records.size() == 2);
    CHECK(gen.records[0].id == "alpha");
    CHECK(gen.records[1].id == "beta");
    const FeatureSequence f = read_features(ws.root / "gen_one" / gen.records[0].features);
    for (float v : f.data) CHECK(std::isfinite(v));
}

TEST_CASE("eval scores a run against itself perfectly and prints the full table") {
    const Workspace& ws = workspace();
    CommandResult r = run_cli("eval --ref data --gen data --out eval_self", ws.root);
    REQUIRE(r.exit_code == 0);

    for (const char* column : {"clips", "F1_seg", "F1_event", "pitch_ACC", "pitch_MAE_Hz",
                               "energy_ACC", "energy_MAE_dB"})
        CHECK(r.out.find(column) != std::string::npos);

    const EvalReport report = eval_report_from_json(slurp(ws.root / "eval_self/report.json"));
    CHECK(report.clips == 200);
    CHECK(report.segment_macro_f1() == 1.0);
    CHECK(report.event_macro_f1() == 1.0);
    CHECK(report.pitch_accuracy() == 1.0);
    CHECK(report.energy_accuracy() == 1.0);
    CHECK(report.pitch_mae() == 0.0);
    CHECK(report.energy_mae() == 0.0);
}

TEST_CASE("eval refuses manifests whose ids do not line up") {
    const Workspace& ws = workspace();

    CommandResult mini = run_cli("mix --config toy.cfg --n 4 --seed 9 --out eval_mini", ws.root);
    REQUIRE(mini.exit_code == 0);

    // same records under renamed ids -> the runs describe different clips
    const fs::path renamed = ws.root / "eval_renamed";
    fs::copy(ws.root / "eval_mini", renamed, fs::copy_options::recursive);
    std::ifstream in(ws.root / "eval_mini/manifest.jsonl");
    std::ofstream out(renamed / "manifest.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        nlohmann::json record = nlohmann::json::parse(line);
        record["id"] = "renamed_" + record["id"].get<std::string>();
        out << record.dump() << "\n";
    }
    out.close();

    CommandResult r = run_cli("eval --ref eval_mini --gen eval_renamed --out eval_bad", ws.root);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("id") != std::string::npos);
}

TEST_CASE("gradcheck passes, covers the whole op suite, and trips on a bad rule") {
    const Workspace& ws = workspace();

    CommandResult ok = run_cli("gradcheck --seed 1", ws.root);
    CHECK(ok.exit_code == 0);
    for (const char* op :
         {"add", "add_bias_rows", "sub", "mul", "scale", "scale_by", "matmul", "matmul_batched",
          "softmax", "layer_norm", "tanh", "silu", "sum", "mean_axis", "mse", "reshape",
          "transpose", "permute", "concat", "embedding", "broadcast_rows", "rope", "end_to_end"})
        CHECK(ok.out.find(op) != std::string::npos);
    CHECK(ok.out.find("PASS") != std::string::npos);
    CHECK(ok.out.find("FAIL") == std::string::npos);

    CommandResult bad = run_cli("gradcheck --seed 1 --corrupt-tanh", ws.root);
    CHECK(bad.exit_code == 2);
    CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("usage errors exit with code 1") {
    const Workspace& ws = workspace();
    CHECK(run_cli("frobnicate", ws.root).exit_code == 1);
    CHECK(run_cli("mix --no-such-flag", ws.root).exit_code == 1);
    CHECK(run_cli("--help", ws.root).exit_code == 0);
}
