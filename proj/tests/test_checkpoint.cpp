#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tprn/checkpoint.hpp"
#include "tprn/config.hpp"

using namespace tprn;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path(name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

Checkpoint makeCheckpoint(bool withOptimizer, bool gate = false) {
    Hyper h;
    h.nSymbols = 6;
    h.nRoles = 4;
    h.dSymbols = 3;
    h.dRoles = 3;
    h.dWord = 5;
    h.gateEnabled = gate;
    Checkpoint c;
    c.params = ModelParams::init(h, TaskKind::TokenClassification, 7, 123);
    if (withOptimizer) {
        auto refs = paramRefs(c.params);
        AdaDeltaState st = AdaDeltaState::zerosLike(refs, 0.9, 1e-5);
        Rng rng(5);
        for (auto& v : st.accumGradSq)
            for (auto& x : v) x = rng.uniform01();
        for (auto& v : st.accumUpdateSq)
            for (auto& x : v) x = rng.uniform01();
        c.optimizer = std::move(st);
    }
    c.meta.seed = 99;
    c.meta.epoch = 3;
    c.meta.createdAt = "2000-01-01T00:00:00Z";
    return c;
}

std::vector<TokenSequence> fixedBatch(const Hyper& h, int labels) {
    Rng rng(777);
    std::vector<TokenSequence> batch;
    for (int s = 0; s < 3; ++s) {
        TokenSequence seq;
        const std::size_t len = 2 + rng.index(3);
        for (std::size_t t = 0; t < len; ++t) {
            Vector w(static_cast<std::size_t>(h.dWord));
            for (auto& x : w) x = rng.uniform(-1.0, 1.0);
            seq.words.push_back(std::move(w));
            seq.labels.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(labels))));
        }
        batch.push_back(std::move(seq));
    }
    return batch;
}

}  // namespace

TEST_CASE("base64 encode/decode round-trip and error paths") {
    Rng rng(1);
    for (std::size_t len : {0u, 1u, 2u, 3u, 7u, 16u, 33u}) {
        std::vector<unsigned char> data(len);
        for (auto& b : data) b = static_cast<unsigned char>(rng.index(256));
        const std::string enc = base64Encode(data.data(), data.size());
        CHECK(base64Decode(enc) == data);
    }
    CHECK_THROWS_AS(base64Decode("abc"), IoError);      // truncated
    CHECK_THROWS_AS(base64Decode("ab!!"), IoError);     // invalid char
    CHECK_THROWS_AS(base64Decode("=AAA"), IoError);     // misplaced padding
}

TEST_CASE("checkpoint: save -> load -> save produces identical bytes") {
    for (const bool opt : {false, true}) {
        const Checkpoint c = makeCheckpoint(opt, opt);
        TempFile a("ckpt_a_tmp.json");
        TempFile b("ckpt_b_tmp.json");
        saveCheckpoint(a.path, c);
        const Checkpoint loaded = loadCheckpoint(a.path);
        saveCheckpoint(b.path, loaded);
        CHECK(slurp(a.path) == slurp(b.path));
        CHECK(loaded.meta.seed == c.meta.seed);
        CHECK(loaded.meta.epoch == c.meta.epoch);
        CHECK(loaded.meta.createdAt == c.meta.createdAt);
        CHECK(loaded.optimizer.has_value() == opt);
    }
}

TEST_CASE("checkpoint: loaded parameters replay a fixed batch's loss to the last bit") {
    Checkpoint c = makeCheckpoint(true);
    TempFile f("ckpt_replay_tmp.json");
    saveCheckpoint(f.path, c);

    const auto batch = fixedBatch(c.params.hyper, 7);
    ObjectiveConfig cfg;
    cfg.cQ = 1e-4;
    const ForwardStats before = forwardLoss(c.params, batch, cfg);

    const Checkpoint loaded = loadCheckpoint(f.path);
    const ForwardStats after = forwardLoss(loaded.params, batch, cfg);
    CHECK(before.loss.total == after.loss.total);
    CHECK(before.loss.crossEntropy == after.loss.crossEntropy);
    CHECK(before.loss.quantization == after.loss.quantization);

    // optimizer accumulators survive bitwise as well
    REQUIRE(loaded.optimizer.has_value());
    for (std::size_t g = 0; g < c.optimizer->accumGradSq.size(); ++g) {
        CHECK(loaded.optimizer->accumGradSq[g] == c.optimizer->accumGradSq[g]);
        CHECK(loaded.optimizer->accumUpdateSq[g] == c.optimizer->accumUpdateSq[g]);
    }
}

TEST_CASE("checkpoint: corruption and version checks") {
    const Checkpoint c = makeCheckpoint(false);
    TempFile f("ckpt_tamper_tmp.json");
    saveCheckpoint(f.path, c);

    // flip one payload character
    std::string text = slurp(f.path);
    const auto pos = text.find("\"data\": \"");
    REQUIRE(pos != std::string::npos);
    const auto at = pos + 10;
    text[at] = text[at] == 'A' ? 'B' : 'A';
    spit(f.path, text);
    CHECK_THROWS_AS(loadCheckpoint(f.path), IoError);

    // version mismatch
    std::string vtext = slurp(f.path);
    saveCheckpoint(f.path, c);
    vtext = slurp(f.path);
    const auto vpos = vtext.find("\"formatVersion\": 1");
    REQUIRE(vpos != std::string::npos);
    vtext.replace(vpos, 18, "\"formatVersion\": 9");
    spit(f.path, vtext);
    CHECK_THROWS_AS(loadCheckpoint(f.path), IoError);

    // truncation
    saveCheckpoint(f.path, c);
    std::string ttext = slurp(f.path);
    spit(f.path, ttext.substr(0, ttext.size() / 2));
    CHECK_THROWS_AS(loadCheckpoint(f.path), IoError);

    CHECK_THROWS_AS(loadCheckpoint("no_such_checkpoint_tmp.json"), IoError);
}

TEST_CASE("run config: defaults carry the published values") {
    const RunConfig cfg;
    CHECK(cfg.hyper.nSymbols == 100);
    CHECK(cfg.hyper.nRoles == 20);
    CHECK(cfg.hyper.dSymbols == 10);
    CHECK(cfg.hyper.dRoles == 10);
    CHECK(cfg.hyper.dWord == 100);
    CHECK(cfg.objective.cQ == 1e-5);
    CHECK(cfg.train.epochs == 12);
    CHECK(cfg.train.rho == 0.95);
    CHECK(cfg.train.epsilon == 1e-6);
    CHECK(cfg.interpret.thresholds.defaultValue == 0.5);
    CHECK(cfg.interpret.topK == 30);
}

TEST_CASE("run config: file parsing, overrides and unknown-key rejection") {
    TempFile f("cfg_tmp.json");
    spit(f.path, R"({
      "seed": 7,
      "hyper": {"nSymbols": 20, "nRoles": 8, "dSymbols": 8, "dRoles": 8, "dWord": 24},
      "objective": {"cQ": 0.001, "labelKind": "joint"},
      "train": {"epochs": 3, "batchSize": 16},
      "grammar": {"classes": 12, "roles": 6, "vocabPerClass": 20, "sequences": 100},
      "interpret": {"thresholdDefault": 0.5, "thresholds": {"3": 0.65}, "topK": 10},
      "paths": {"outDir": "runs/demo"}
    })");
    const RunConfig cfg = loadRunConfig(f.path);
    CHECK(cfg.seed == 7);
    CHECK(cfg.hyper.nSymbols == 20);
    CHECK(cfg.objective.cQ == 0.001);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.grammar.classes == 12);
    CHECK(cfg.interpret.thresholds.of(3) == 0.65);
    CHECK(cfg.interpret.thresholds.of(0) == 0.5);
    CHECK(cfg.paths.outDir == "runs/demo");
    CHECK(cfg.embeddingsPath() == "runs/demo/embeddings.txt");
    CHECK(cfg.checkpointPath() == "runs/demo/checkpoint.json");

    TempFile bad("cfg_bad_tmp.json");
    spit(bad.path, R"({"hyper": {"nSymbols": 20, "nSymbol": 3}})");
    try {
        loadRunConfig(bad.path);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("hyper.nSymbol") != std::string::npos);
    }

    TempFile bad2("cfg_bad2_tmp.json");
    spit(bad2.path, R"({"sneaky": 1})");
    CHECK_THROWS_AS(loadRunConfig(bad2.path), ConfigError);

    TempFile bad3("cfg_bad3_tmp.json");
    spit(bad3.path, R"({"train": {"epochs": 0}})");
    CHECK_THROWS_AS(loadRunConfig(bad3.path), ConfigError);

    TempFile bad4("cfg_bad4_tmp.json");
    spit(bad4.path, R"({"objective": {"taskKind": "summarization"}})");
    CHECK_THROWS_AS(loadRunConfig(bad4.path), ConfigError);
}

TEST_CASE("run config: write/load round-trip") {
    RunConfig cfg;
    cfg.seed = 31;
    cfg.hyper.nSymbols = 9;
    cfg.objective.cQ = 0.5;
    cfg.labelKind = LabelKind::Role;
    cfg.interpret.thresholds.perRole[2] = 0.25;
    cfg.paths.outDir = "elsewhere";
    TempFile f("cfg_rt_tmp.json");
    writeRunConfig(cfg, f.path);
    const RunConfig back = loadRunConfig(f.path);
    CHECK(back.seed == cfg.seed);
    CHECK(back.hyper.nSymbols == 9);
    CHECK(back.objective.cQ == 0.5);
    CHECK((back.labelKind == LabelKind::Role));
    CHECK(back.interpret.thresholds.of(2) == 0.25);
    CHECK(back.paths.outDir == "elsewhere");
}
