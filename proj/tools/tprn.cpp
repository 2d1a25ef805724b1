// Command-line front end: data generation, training, gradient verification
// and interpretation, all driven by one JSON config for reproducibility.
//
// Exit codes: 0 success, 1 verification failure, 2 configuration error,
// 3 I/O error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tprn/checkpoint.hpp"
#include "tprn/config.hpp"
#include "tprn/data.hpp"
#include "tprn/interpret.hpp"
#include "tprn/train.hpp"

namespace fs = std::filesystem;
using namespace tprn;

namespace {

struct CommonFlags {
    std::string configPath;
    std::string outDir;
    std::string checkpointPath;
    std::string resumePath;
    bool hasSeed = false;
    std::uint64_t seed = 0;
};

RunConfig loadWithOverrides(const CommonFlags& f) {
    RunConfig cfg = f.configPath.empty() ? RunConfig{} : loadRunConfig(f.configPath);
    if (!f.outDir.empty()) cfg.paths.outDir = f.outDir;
    if (!f.checkpointPath.empty()) cfg.paths.checkpoint = f.checkpointPath;
    if (!f.resumePath.empty()) cfg.paths.resume = f.resumePath;
    if (f.hasSeed) cfg.seed = f.seed;
    return cfg;
}

void ensureOutDir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.paths.outDir, ec);
    if (ec)
        throw IoError("cannot create output directory " + cfg.paths.outDir + ": " + ec.message());
}

std::string isoTimestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int cmdGenData(const CommonFlags& flags) {
    const RunConfig cfg = loadWithOverrides(flags);
    ensureOutDir(cfg);
    const SyntheticGrammar grammar = genGrammar(cfg.seed, cfg.grammar.classes, cfg.grammar.roles,
                                                cfg.grammar.vocabPerClass, cfg.grammarOptions());
    const auto corpus = genCorpus(grammar, cfg.grammar.sequences, Rng::deriveSeed(cfg.seed, 101));
    saveEmbeddings(grammar.embeddings, cfg.embeddingsPath());
    writeGrammarJson(grammar, cfg.grammarPath());
    writeCorpusJsonl(corpus, cfg.corpusPath());
    std::cout << "wrote " << cfg.embeddingsPath() << " (" << grammar.embeddings.size()
              << " tokens), " << cfg.grammarPath() << " ("
              << grammar.roleTemplates.size() << " templates), " << cfg.corpusPath() << " ("
              << corpus.size() << " examples)\n";
    return 0;
}

int cmdTrain(const CommonFlags& flags) {
    const RunConfig cfg = loadWithOverrides(flags);
    ensureOutDir(cfg);

    const EmbeddingTable embeddings = loadEmbeddings(cfg.embeddingsPath());
    if (embeddings.dWord() != cfg.hyper.dWord)
        throw ConfigError("train: embeddings have dWord " + std::to_string(embeddings.dWord()) +
                          " but config says " + std::to_string(cfg.hyper.dWord));
    const auto corpus = readCorpusJsonl(cfg.corpusPath());
    const auto dataset = buildSequences(corpus, embeddings, cfg.labelKind, cfg.grammar.classes,
                                        cfg.grammar.roles);

    ModelParams model;
    AdaDeltaState resumeState;
    const AdaDeltaState* resumePtr = nullptr;
    int startEpoch = 0;
    if (!cfg.paths.resume.empty()) {
        Checkpoint ckpt = loadCheckpoint(cfg.paths.resume);
        model = std::move(ckpt.params);
        startEpoch = ckpt.meta.epoch;
        if (ckpt.optimizer) {
            resumeState = std::move(*ckpt.optimizer);
            resumePtr = &resumeState;
        }
        std::cout << "resumed from " << cfg.paths.resume << " at epoch " << startEpoch << "\n";
    } else {
        const int labels = cfg.objective.taskKind == TaskKind::TokenClassification
                               ? labelCount(cfg.labelKind, cfg.grammar.classes, cfg.grammar.roles)
                               : 0;
        model = ModelParams::init(cfg.hyper, cfg.objective.taskKind, labels,
                                  Rng::deriveSeed(cfg.seed, 7));
    }

    const TrainConfig tc = cfg.trainConfig(startEpoch);
    const TrainResult result = trainLoop(tc, dataset, model, resumePtr);
    writeMetricsCsv(result.log, cfg.metricsPath());

    Checkpoint ckpt;
    ckpt.params = std::move(model);
    ckpt.optimizer = result.optimizer;
    ckpt.meta.seed = cfg.seed;
    ckpt.meta.epoch = result.epochsCompleted;
    ckpt.meta.createdAt = isoTimestamp();
    saveCheckpoint(cfg.checkpointPath(), ckpt);

    for (const auto& m : result.log)
        std::printf("epoch %d: crossEntropy=%.6f quantization=%.6f meanMax=%.4f accuracy=%.4f\n",
                    m.epoch, m.crossEntropy, m.quantization, m.meanMaxComponent, m.accuracy);
    std::cout << "wrote " << cfg.metricsPath() << " and " << cfg.checkpointPath() << "\n";
    if (result.aborted) {
        std::cerr << "training diverged; checkpoint holds the last good epoch ("
                  << result.epochsCompleted << ")\n";
        return 1;
    }
    return 0;
}

int cmdGradcheck(const CommonFlags& flags, double toleranceOverride, bool corrupt) {
    const RunConfig cfg = loadWithOverrides(flags);
    const double tolerance = toleranceOverride > 0.0 ? toleranceOverride : cfg.gradcheck.tolerance;

    // seeded synthetic batch at the configured dimensions
    const int labels = cfg.objective.taskKind == TaskKind::TokenClassification
                           ? labelCount(cfg.labelKind, cfg.grammar.classes, cfg.grammar.roles)
                           : 0;
    ModelParams model = ModelParams::init(cfg.hyper, cfg.objective.taskKind, labels,
                                          Rng::deriveSeed(cfg.seed, 7));
    Rng rng(Rng::deriveSeed(cfg.seed, 55));
    std::vector<TokenSequence> batch;
    for (int s = 0; s < cfg.gradcheck.batchSequences; ++s) {
        TokenSequence seq;
        const int len = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.gradcheck.maxLength)));
        for (int t = 0; t < len; ++t) {
            Vector w(static_cast<std::size_t>(cfg.hyper.dWord));
            for (auto& x : w) x = rng.uniform(-1.0, 1.0);
            seq.words.push_back(std::move(w));
            seq.labels.push_back(labels > 0 ? static_cast<int>(rng.index(static_cast<std::size_t>(labels))) : 0);
        }
        seq.spanStart = 0;
        seq.spanEnd = len - 1;
        batch.push_back(std::move(seq));
    }

    FdOptions opts;
    opts.seed = cfg.seed;
    opts.corruptAnalytic = corrupt;
    const FdReport rep = fdCheck(model, batch, cfg.objective, cfg.gradcheck.h, opts);
    std::printf("gradcheck: maxRelErr=%.3e (tolerance %.3e) worst=%s coords=%zu\n", rep.maxRelErr,
                tolerance, rep.worstParam.c_str(), rep.coordsChecked);
    if (rep.maxRelErr < tolerance) {
        std::cout << "PASS\n";
        return 0;
    }
    std::cout << "FAIL\n";
    return 1;
}

int cmdInterpret(const CommonFlags& flags) {
    const RunConfig cfg = loadWithOverrides(flags);
    ensureOutDir(cfg);

    const Checkpoint ckpt = loadCheckpoint(cfg.checkpointPath());
    const EmbeddingTable embeddings = loadEmbeddings(cfg.embeddingsPath());
    const auto corpus = readCorpusJsonl(cfg.corpusPath());

    TraceDump dump = dumpTraces(ckpt.params, corpus, embeddings);
    const std::string dumpPath = cfg.paths.outDir + "/traces.jsonl";
    writeTraceDump(dump, dumpPath);

    InterpretationReport report;
    {
        OnehotnessAccumulator acc;
        for (const auto& r : dump.records) {
            StepTrace t;
            t.symbolAttention = r.symbolAttention;
            t.roleAttention = r.roleAttention;
            acc.add(t);
        }
        const Onehotness o = acc.finish();
        report.attention = {o.meanMaxComponent, o.meanQ, o.meanMaxSymbol, o.meanMaxRole};
    }

    report.roles = assignRoles(dump, cfg.interpret.thresholds, cfg.interpret.direction);
    {
        std::vector<std::pair<int, std::string>> memberships;
        for (const auto& cluster : report.roles)
            for (int idx : cluster.members)
                memberships.emplace_back(cluster.roleId,
                                         std::to_string(dump.records[static_cast<std::size_t>(idx)].goldRole));
        report.rolePurity = purity(memberships);
    }

    const SymbolAssignment symbols =
        assignSymbols(dump, ckpt.params.fwd.symbolEmbeddings, cfg.interpret.topK,
                      cfg.interpret.symbolMode, cfg.interpret.direction);
    {
        std::vector<std::pair<int, std::string>> memberships;
        std::vector<int> occurrences(symbols.topTokens.size(), 0);
        for (std::size_t i = 0; i < dump.records.size(); ++i) {
            if (symbols.assignedSymbol[i] < 0) continue;
            occurrences[static_cast<std::size_t>(symbols.assignedSymbol[i])] += 1;
            memberships.emplace_back(symbols.assignedSymbol[i],
                                     std::to_string(dump.records[i].goldClass));
        }
        report.symbolPurity = purity(memberships);
        for (std::size_t j = 0; j < symbols.topTokens.size(); ++j) {
            if (occurrences[j] == 0) continue;
            SymbolClusterSummary s;
            s.symbolId = static_cast<int>(j);
            s.occurrences = occurrences[j];
            s.topTokens = symbols.topTokens[j];
            report.symbols.push_back(std::move(s));
        }
    }

    // polysemy table for the planted word, contexts = gold class
    if (fs::exists(cfg.grammarPath())) {
        const SyntheticGrammar grammar = readGrammarJson(cfg.grammarPath(), EmbeddingTable{});
        if (grammar.polysemy) {
            const auto labeler = [](const TraceRecord& r) { return std::to_string(r.goldClass); };
            report.polysemy.push_back(polysemyTable(grammar.polysemy->word, dump, symbols, labeler));
        }
    }

    const std::string jsonPath = cfg.paths.outDir + "/report.json";
    const std::string csvPath = cfg.paths.outDir + "/report.csv";
    writeReport(report, jsonPath, ReportFormat::Json);
    writeReport(report, csvPath, ReportFormat::Csv);
    std::cout << "wrote " << dumpPath << ", " << jsonPath << ", " << csvPath << "\n";

    for (const auto& cluster : report.roles) {
        if (cluster.members.empty()) continue;
        std::printf("role %d: %zu occurrences, majority gold role %s (purity %.3f)\n",
                    cluster.roleId, cluster.members.size(),
                    report.rolePurity.majorityLabel(cluster.roleId).c_str(),
                    report.rolePurity.majorityShare(cluster.roleId));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-product recurrent network trainer and interpreter"};
    app.require_subcommand(1);

    CommonFlags flags;
    double tolerance = 0.0;
    bool corrupt = false;

    auto addCommon = [&](CLI::App* sub) {
        sub->add_option("-c,--config", flags.configPath, "JSON config file");
        sub->add_option("--out", flags.outDir, "output directory override");
        sub->add_option("--checkpoint", flags.checkpointPath, "checkpoint path override");
        sub->add_option("--seed", flags.seed, "seed override")->each([&](const std::string&) {
            flags.hasSeed = true;
        });
    };

    CLI::App* genData = app.add_subcommand("gen-data", "generate grammar, embeddings and corpus");
    addCommon(genData);
    CLI::App* train = app.add_subcommand("train", "train a model on a generated corpus");
    addCommon(train);
    train->add_option("--resume", flags.resumePath, "checkpoint to resume from");
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify gradients by finite differences");
    addCommon(gradcheck);
    gradcheck->add_option("--tolerance", tolerance, "override pass tolerance");
    gradcheck->add_flag("--corrupt-gradient", corrupt, "test hook: force a failing comparison")
        ->group("");
    CLI::App* interpret = app.add_subcommand("interpret", "dump traces and build reports");
    addCommon(interpret);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (genData->parsed()) return cmdGenData(flags);
        if (train->parsed()) return cmdTrain(flags);
        if (gradcheck->parsed()) return cmdGradcheck(flags, tolerance, corrupt);
        if (interpret->parsed()) return cmdInterpret(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
