#include <catch2/catch.hpp>

#include <filesystem>
#include <fstream>

#include "avseg/cli.hpp"

using namespace avseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("avseg_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// a fast config for end-to-end CLI flows
void write_tiny_config(const std::string& path) {
    Json j;
    j["seed"] = 9;
    j["scene"] = {{"height", 16},       {"width", 16},          {"categories", 3},
                  {"instance_count", Json::array({1, 2})}, {"sounding_count", Json::array({1, 1})},
                  {"embedding_dim", 8}};
    j["model"] = {{"queries", 6}, {"hidden_dim", 10}};
    j["optimizer"] = {{"stage1_steps", 150}, {"stage2_steps", 300}, {"lr_head", 0.3}};
    j["samples"] = {{"train", 20}, {"test", 8}};
    jsonio::save(path, j);
}

}  // namespace

TEST_CASE("cli usage and dispatch errors") {
    CHECK(cli::run({}) == 1);
    CHECK(cli::run({"no-such-command"}) == 1);
    CHECK(cli::run({"--help"}) == 0);
    CHECK(cli::run({"eval"}) == 1);  // missing required flags
    CHECK(cli::run({"eval", "--pred", "/nonexistent", "--gt", "/nonexistent"}) == 1);
    CHECK(cli::run({"ablate", "--study", "nope"}) == 1);
}

TEST_CASE("cli gradcheck") {
    CHECK(cli::run({"gradcheck", "--seed", "3"}) == 0);
    CHECK(cli::run({"gradcheck", "--seed", "3", "--gts", "9"}) == 1);
}

TEST_CASE("cli end-to-end flow") {
    TempDir dir;
    write_tiny_config(dir.file("config.json"));

    // synthesize a dataset
    REQUIRE(cli::run({"synth-gen", "--config", dir.file("config.json"), "--out",
                      dir.file("data")}) == 0);
    CHECK(fs::exists(dir.file("data/dataset.json")));
    CHECK(fs::exists(dir.file("data/train/sample_0000/ground_truth.json")));
    CHECK(fs::exists(dir.file("data/test/sample_0000/union.pgm")));

    // train, emitting every artifact
    REQUIRE(cli::run({"train", "--config", dir.file("config.json"), "--checkpoint",
                      dir.file("model.avsm"), "--trace", dir.file("trace.json"), "--eval-json",
                      dir.file("eval.json"), "--emit-preds", dir.file("preds")}) == 0);
    CHECK(fs::exists(dir.file("model.avsm")));
    CHECK(fs::exists(dir.file("preds/predictions.json")));
    const Json eval_doc = jsonio::load(dir.file("eval.json"));
    CHECK(eval_doc["mean_jaccard"].get<double>() >= 0.0);
    const Json trace = jsonio::load(dir.file("trace.json"));
    CHECK(trace["stage1"].size() == 150);
    CHECK(trace["stage2"].size() == 300);

    // the emitted predictions feed match and loss against a sample's gts
    REQUIRE(cli::run({"match", "--pred", dir.file("preds/predictions.json"), "--gt",
                      dir.file("data/train/sample_0000/ground_truth.json"), "--json",
                      dir.file("match.json")}) == 0);
    const Json match_doc = jsonio::load(dir.file("match.json"));
    CHECK(match_doc["pairs"].size() >= 1);
    CHECK(match_doc.contains("total_cost"));

    REQUIRE(cli::run({"loss", "--pred", dir.file("preds/predictions.json"), "--gt",
                      dir.file("data/train/sample_0000/ground_truth.json"), "--json",
                      dir.file("loss.json"), "--grad-dir", dir.file("grads")}) == 0);
    const Json loss_doc = jsonio::load(dir.file("loss.json"));
    CHECK(loss_doc["total"].get<double>() >= 0.0);
    CHECK(fs::exists(dir.file("grads/q_000_mask_logit_grad.sasl")));
    CHECK(fs::exists(dir.file("grads/class_logit_grads.json")));

    // inference consumes the checkpoint and an embedding file
    REQUIRE(cli::run({"infer", "--checkpoint", dir.file("model.avsm"), "--embedding",
                      dir.file("data/test/sample_0000/embedding.json"), "--out-map",
                      dir.file("out.sasl"), "--out-mask", dir.file("out.pgm")}) == 0);
    CHECK(fs::exists(dir.file("out.sasl")));
    CHECK(fs::exists(dir.file("out.pgm")));

    // score the per-frame inferences against the union masks
    fs::create_directories(dir.file("eval_pred"));
    fs::create_directories(dir.file("eval_gt"));
    for (int i = 0; i < 8; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%02d", i);
        char sample[48];
        std::snprintf(sample, sizeof(sample), "data/test/sample_%04d", i);
        REQUIRE(cli::run({"infer", "--checkpoint", dir.file("model.avsm"), "--embedding",
                          dir.file(std::string(sample) + "/embedding.json"), "--out-map",
                          dir.file("eval_pred/" + std::string(name) + ".sasl.tmp"), "--out-mask",
                          dir.file("eval_pred/" + std::string(name) + ".pgm")}) == 0);
        fs::remove(dir.file("eval_pred/" + std::string(name) + ".sasl.tmp"));
        fs::copy_file(dir.file(std::string(sample) + "/union.pgm"),
                      dir.file("eval_gt/" + std::string(name) + ".pgm"));
    }
    REQUIRE(cli::run({"eval", "--pred", dir.file("eval_pred"), "--gt", dir.file("eval_gt"),
                      "--json", dir.file("report.json")}) == 0);
    const Json report = jsonio::load(dir.file("report.json"));
    CHECK(report["frame_count"].get<long>() == 8);
    CHECK(report["mean_jaccard"].get<double>() > 0.5);
}

TEST_CASE("cli eval sweeps thresholds over soft maps") {
    TempDir dir;
    fs::create_directories(dir.file("pred"));
    fs::create_directories(dir.file("gt"));
    const MaskShape s{4, 4};
    BinaryMask gt(s);
    for (int i = 0; i < 8; ++i) gt.pixels[i] = 1;
    write_pgm(dir.file("gt/a.pgm"), gt);
    SoftMask map(s, 0.0);
    for (int i = 0; i < 8; ++i) map.pixels[i] = 0.75f;
    for (int i = 8; i < 16; ++i) map.pixels[i] = 0.55f;
    write_sasl(dir.file("pred/a.sasl"), map.shape, map.pixels);
    REQUIRE(cli::run({"eval", "--pred", dir.file("pred"), "--gt", dir.file("gt"), "--thresholds",
                      "0.5,0.6,0.8", "--json", dir.file("sweep.json")}) == 0);
    const Json sweep = jsonio::load(dir.file("sweep.json"));
    REQUIRE(sweep["sweep"].size() == 3);
    CHECK(sweep["sweep"][0]["mean_jaccard"].get<double>() == Approx(0.5));  // everything on
    CHECK(sweep["sweep"][1]["mean_jaccard"].get<double>() == Approx(1.0));  // exactly the gt
    CHECK(sweep["sweep"][2]["mean_jaccard"].get<double>() == Approx(0.0));  // nothing on
}

TEST_CASE("cli outputs are byte-identical across reruns") {
    TempDir dir;
    write_tiny_config(dir.file("config.json"));
    for (const char* run : {"a", "b"}) {
        REQUIRE(cli::run({"train", "--config", dir.file("config.json"), "--checkpoint",
                          dir.file(std::string("model_") + run + ".avsm"), "--trace",
                          dir.file(std::string("trace_") + run + ".json"), "--eval-json",
                          dir.file(std::string("eval_") + run + ".json")}) == 0);
    }
    CHECK(slurp(dir.file("model_a.avsm")) == slurp(dir.file("model_b.avsm")));
    CHECK(slurp(dir.file("trace_a.json")) == slurp(dir.file("trace_b.json")));
    CHECK(slurp(dir.file("eval_a.json")) == slurp(dir.file("eval_b.json")));
}
