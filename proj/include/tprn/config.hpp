#pragma once

#include <string>

#include "tprn/cell.hpp"
#include "tprn/data.hpp"
#include "tprn/interpret.hpp"
#include "tprn/train.hpp"

namespace tprn {

// One structured config file drives every command; flags may override only
// paths and the seed. Defaults follow the published setup (100 symbols, 20
// roles, embedding size 10, cQ = 1e-5, AdaDelta for 12 epochs).
struct RunConfig {
    std::uint64_t seed = 42;

    Hyper hyper;
    ObjectiveConfig objective;
    LabelKind labelKind = LabelKind::Joint;

    struct TrainSection {
        int epochs = 12;
        int batchSize = 32;
        double rho = 0.95;
        double epsilon = 1e-6;
        double clipNorm = 0.0;
    } train;

    struct GrammarSection {
        int classes = 12;
        int roles = 6;
        int vocabPerClass = 20;
        int sequences = 5000;
        double noiseScale = 0.08;
        int extraTemplates = 8;
        bool plantPolysemy = true;
        double polysemyProb = 0.25;
    } grammar;

    struct InterpretSection {
        RoleThresholds thresholds;
        int topK = 30;
        SymbolSimilarityMode symbolMode = SymbolSimilarityMode::EmbeddedVector;
        DirectionFilter direction = DirectionFilter::Forward;
    } interpret;

    struct GradcheckSection {
        double h = 1e-5;
        double tolerance = 1e-5;
        int batchSequences = 3;
        int maxLength = 4;
    } gradcheck;

    struct PathsSection {
        std::string outDir = "out";
        std::string embeddings;  // default <outDir>/embeddings.txt
        std::string grammar;     // default <outDir>/grammar.json
        std::string corpus;      // default <outDir>/corpus.jsonl
        std::string checkpoint;  // default <outDir>/checkpoint.json
        std::string metrics;     // default <outDir>/metrics.csv
        std::string resume;      // empty = fresh run
    } paths;

    std::string embeddingsPath() const;
    std::string grammarPath() const;
    std::string corpusPath() const;
    std::string checkpointPath() const;
    std::string metricsPath() const;

    TrainConfig trainConfig(int startEpoch = 0) const;
    GrammarOptions grammarOptions() const;
};

// Parses and schema-validates a config file. Unknown keys are rejected with
// their full path; bad values raise ConfigError.
RunConfig loadRunConfig(const std::string& path);

void writeRunConfig(const RunConfig& cfg, const std::string& path);

}  // namespace tprn
