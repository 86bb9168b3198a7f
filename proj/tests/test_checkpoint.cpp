#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "soundflow/checkpoint.hpp"
#include "soundflow/model.hpp"
#include "soundflow/rng.hpp"

using namespace soundflow;
namespace fs = std::filesystem;

namespace {

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.num_blocks = 2;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.feature_channels = 3;
    cfg.max_frames = 16;
    cfg.max_text_tokens = 32;
    cfg.time_embed_dim = 8;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("soundflow_ckpt_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Tensor random_tensor(const Shape& shape, Rng& rng) {
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = rng.normal();
    return Tensor(shape, std::move(values));
}

// A few optimizer steps so the saved state is far from initialization.
void warm_up(VelocityModel& model, AdamW& optim, int steps, std::uint64_t seed) {
    const Schedule schedule = Schedule::linear();
    Rng data_rng(7);
    std::vector<TrainItem> batch;
    for (int i = 0; i < 4; ++i)
        batch.push_back(TrainItem{
            random_tensor({5, 3}, data_rng),
            "Hum, Start at 0.5s and End at 1.4s, it has Low Pitch and Normal Energy."});
    for (int s = 0; s < steps; ++s) {
        Rng rng(derive_seed(seed, optim.step_count));
        train_step(model, optim, batch, schedule, rng);
    }
}

}  // namespace

TEST_CASE("checkpoints round-trip the model bit-exactly") {
    TempDir dir("roundtrip");
    const fs::path path = dir.path / "model.acmp";
    const std::string meta = R"({"sample_rate":16000})";

    VelocityModel model(micro_config(), build_vocabulary({"Hum", "Tone"}), 5);
    AdamW optim;
    warm_up(model, optim, 3, 77);
    save_checkpoint(path, model, "cosine", meta);

    LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.schedule_name == "cosine");
    CHECK(loaded.dataset_meta_json == meta);
    CHECK(loaded.model.vocabulary() == model.vocabulary());
    CHECK_FALSE(loaded.optimizer.has_value());
    REQUIRE(loaded.model.parameters().size() == model.parameters().size());
    for (const auto& [name, p] : model.parameters()) {
        REQUIRE(loaded.model.parameters().count(name) == 1);
        CHECK(loaded.model.parameters().at(name).values() == p.values());
    }

    // forward passes agree bitwise
    Rng rng(13);
    const Tensor z = random_tensor({6, 3}, rng);
    const std::string caption =
        "Tone, Start at 0.2s and End at 2.0s, it has High Pitch and High Energy.";
    CHECK(loaded.model.forward_velocity(z, 0.31, caption).values() ==
          model.forward_velocity(z, 0.31, caption).values());
}

TEST_CASE("optimizer state rides along and resumes exactly") {
    TempDir dir("resume");
    const fs::path path = dir.path / "model.acmp";
    const Schedule schedule = Schedule::linear();
    Rng data_rng(7);
    std::vector<TrainItem> batch;
    for (int i = 0; i < 4; ++i)
        batch.push_back(TrainItem{
            random_tensor({5, 3}, data_rng),
            "Hum, Start at 0.5s and End at 1.4s, it has Low Pitch and Normal Energy."});

    // uninterrupted run: 5 steps
    VelocityModel straight(micro_config(), build_vocabulary({"Hum", "Tone"}), 5);
    AdamW straight_optim;
    std::vector<double> straight_losses;
    for (int s = 0; s < 5; ++s) {
        Rng rng(derive_seed(99, straight_optim.step_count));
        straight_losses.push_back(train_step(straight, straight_optim, batch, schedule, rng));
    }

    // interrupted run: 3 steps, checkpoint, reload, 2 more
    VelocityModel first(micro_config(), build_vocabulary({"Hum", "Tone"}), 5);
    AdamW first_optim;
    std::vector<double> resumed_losses;
    for (int s = 0; s < 3; ++s) {
        Rng rng(derive_seed(99, first_optim.step_count));
        resumed_losses.push_back(train_step(first, first_optim, batch, schedule, rng));
    }
    save_checkpoint(path, first, "linear", "", &first_optim);

    LoadedCheckpoint loaded = load_checkpoint(path);
    REQUIRE(loaded.optimizer.has_value());
    CHECK(loaded.optimizer->step_count == 3);
    CHECK(loaded.optimizer->lr == first_optim.lr);
    for (int s = 0; s < 2; ++s) {
        Rng rng(derive_seed(99, loaded.optimizer->step_count));
        resumed_losses.push_back(
            train_step(loaded.model, *loaded.optimizer, batch, schedule, rng));
    }
    CHECK(resumed_losses == straight_losses);
    for (const auto& [name, p] : straight.parameters())
        CHECK(loaded.model.parameters().at(name).values() == p.values());
}

TEST_CASE("loading validates the embedded config against expectations") {
    TempDir dir("expected");
    const fs::path path = dir.path / "model.acmp";
    VelocityModel model(micro_config(), build_vocabulary({"Hum", "Tone"}), 5);
    save_checkpoint(path, model, "linear", "");

    ModelConfig expected = micro_config();
    CHECK_NOTHROW(load_checkpoint(path, &expected));
    expected.feature_channels = 64;
    CHECK_THROWS_WITH_AS(load_checkpoint(path, &expected),
                         doctest::Contains("feature_channels"), std::runtime_error);
}

TEST_CASE("malformed files are rejected with a cause") {
    TempDir dir("broken");
    const fs::path good = dir.path / "model.acmp";
    VelocityModel model(micro_config(), build_vocabulary({"Hum", "Tone"}), 5);
    save_checkpoint(good, model, "linear", "");

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir.path / "absent.acmp"), std::runtime_error);
    }
    SUBCASE("bad magic") {
        const fs::path bad = dir.path / "bad.acmp";
        std::ofstream(bad, std::ios::binary) << "RIFFnope";
        CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("magic"),
                             std::runtime_error);
    }
    SUBCASE("wrong version") {
        std::fstream f(good, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const char v2[4] = {2, 0, 0, 0};
        f.write(v2, 4);
        f.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(good), doctest::Contains("version"),
                             std::runtime_error);
    }
    SUBCASE("truncation") {
        std::ifstream in(good, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        in.close();
        const fs::path cut = dir.path / "cut.acmp";
        std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        CHECK_THROWS_WITH_AS(load_checkpoint(cut), doctest::Contains("truncated"),
                             std::runtime_error);
    }
}

TEST_CASE("the desk-scale config fits the 50 MB checkpoint budget") {
    TempDir dir("size");
    const fs::path path = dir.path / "toy.acmp";
    ModelConfig toy;  // defaults: 4 blocks, hidden 256, 8 heads, 64 channels
    const auto vocab = build_vocabulary(
        {"Drone", "Thump", "Hum", "Tone", "Whistle", "Chirp", "Hiss", "Crackle"});
    VelocityModel model(toy, vocab, 1);
    save_checkpoint(path, model, "linear", "");
    const auto bytes = fs::file_size(path);
    CHECK(bytes < 50u * 1024 * 1024);
    CHECK(bytes > 40u * 1024 * 1024);  // float64 payload really is in there

    LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.model.config().hidden_dim == 256);
    CHECK(loaded.model.parameters().size() == model.parameters().size());
}
