#include "tprn/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace tprn {

using nlohmann::json;

namespace {

void rejectUnknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, val] : j.items()) {
        (void)val;
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

template <class T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config: bad value for '") + key + "'");
        }
    }
}

}  // namespace

std::string RunConfig::embeddingsPath() const {
    return paths.embeddings.empty() ? paths.outDir + "/embeddings.txt" : paths.embeddings;
}
std::string RunConfig::grammarPath() const {
    return paths.grammar.empty() ? paths.outDir + "/grammar.json" : paths.grammar;
}
std::string RunConfig::corpusPath() const {
    return paths.corpus.empty() ? paths.outDir + "/corpus.jsonl" : paths.corpus;
}
std::string RunConfig::checkpointPath() const {
    return paths.checkpoint.empty() ? paths.outDir + "/checkpoint.json" : paths.checkpoint;
}
std::string RunConfig::metricsPath() const {
    return paths.metrics.empty() ? paths.outDir + "/metrics.csv" : paths.metrics;
}

TrainConfig RunConfig::trainConfig(int startEpoch) const {
    TrainConfig t;
    t.epochs = train.epochs;
    t.batchSize = train.batchSize;
    t.seed = seed;
    t.objective = objective;
    t.rho = train.rho;
    t.epsilon = train.epsilon;
    t.clipNorm = train.clipNorm;
    t.startEpoch = startEpoch;
    return t;
}

GrammarOptions RunConfig::grammarOptions() const {
    GrammarOptions o;
    o.dWord = hyper.dWord;
    o.noiseScale = grammar.noiseScale;
    o.extraTemplates = grammar.extraTemplates;
    o.plantPolysemy = grammar.plantPolysemy;
    o.polysemyProb = grammar.polysemyProb;
    return o;
}

RunConfig loadRunConfig(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("loadRunConfig: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("loadRunConfig: " + path + ": " + e.what());
    }

    RunConfig cfg;
    rejectUnknown(j, {"seed", "hyper", "objective", "train", "grammar", "interpret", "gradcheck",
                      "paths"},
                  "");
    get(j, "seed", cfg.seed);

    if (j.contains("hyper")) {
        const auto& h = j["hyper"];
        rejectUnknown(h, {"nSymbols", "nRoles", "dSymbols", "dRoles", "dWord", "gateEnabled",
                          "gatedFeedback"},
                      "hyper");
        get(h, "nSymbols", cfg.hyper.nSymbols);
        get(h, "nRoles", cfg.hyper.nRoles);
        get(h, "dSymbols", cfg.hyper.dSymbols);
        get(h, "dRoles", cfg.hyper.dRoles);
        get(h, "dWord", cfg.hyper.dWord);
        get(h, "gateEnabled", cfg.hyper.gateEnabled);
        get(h, "gatedFeedback", cfg.hyper.gatedFeedback);
        cfg.hyper.validate();
    }

    if (j.contains("objective")) {
        const auto& o = j["objective"];
        rejectUnknown(o, {"cQ", "taskKind", "qAggregation", "labelKind"}, "objective");
        get(o, "cQ", cfg.objective.cQ);
        if (cfg.objective.cQ < 0.0)
            throw ConfigError("config: objective.cQ must be nonnegative");
        if (o.contains("taskKind")) {
            const auto s = o["taskKind"].get<std::string>();
            if (s == "tokenClassification")
                cfg.objective.taskKind = TaskKind::TokenClassification;
            else if (s == "spanPointing")
                cfg.objective.taskKind = TaskKind::SpanPointing;
            else
                throw ConfigError("config: objective.taskKind must be tokenClassification or spanPointing");
        }
        if (o.contains("qAggregation")) {
            const auto s = o["qAggregation"].get<std::string>();
            if (s == "mean")
                cfg.objective.qAggregation = QAggregation::Mean;
            else if (s == "sum")
                cfg.objective.qAggregation = QAggregation::Sum;
            else
                throw ConfigError("config: objective.qAggregation must be mean or sum");
        }
        if (o.contains("labelKind")) {
            const auto s = o["labelKind"].get<std::string>();
            if (s == "class")
                cfg.labelKind = LabelKind::Class;
            else if (s == "role")
                cfg.labelKind = LabelKind::Role;
            else if (s == "joint")
                cfg.labelKind = LabelKind::Joint;
            else
                throw ConfigError("config: objective.labelKind must be class, role or joint");
        }
    }

    if (j.contains("train")) {
        const auto& t = j["train"];
        rejectUnknown(t, {"epochs", "batchSize", "rho", "epsilon", "clipNorm"}, "train");
        get(t, "epochs", cfg.train.epochs);
        get(t, "batchSize", cfg.train.batchSize);
        get(t, "rho", cfg.train.rho);
        get(t, "epsilon", cfg.train.epsilon);
        get(t, "clipNorm", cfg.train.clipNorm);
        if (cfg.train.epochs < 1)
            throw ConfigError("config: train.epochs must be >= 1");
        if (cfg.train.batchSize < 1)
            throw ConfigError("config: train.batchSize must be >= 1");
    }

    if (j.contains("grammar")) {
        const auto& g = j["grammar"];
        rejectUnknown(g, {"classes", "roles", "vocabPerClass", "sequences", "noiseScale",
                          "extraTemplates", "plantPolysemy", "polysemyProb"},
                      "grammar");
        get(g, "classes", cfg.grammar.classes);
        get(g, "roles", cfg.grammar.roles);
        get(g, "vocabPerClass", cfg.grammar.vocabPerClass);
        get(g, "sequences", cfg.grammar.sequences);
        get(g, "noiseScale", cfg.grammar.noiseScale);
        get(g, "extraTemplates", cfg.grammar.extraTemplates);
        get(g, "plantPolysemy", cfg.grammar.plantPolysemy);
        get(g, "polysemyProb", cfg.grammar.polysemyProb);
        if (cfg.grammar.classes < 1 || cfg.grammar.roles < 1 || cfg.grammar.vocabPerClass < 1)
            throw ConfigError("config: grammar sizes must be >= 1");
        if (cfg.grammar.sequences < 1)
            throw ConfigError("config: grammar.sequences must be >= 1");
    }

    if (j.contains("interpret")) {
        const auto& it = j["interpret"];
        rejectUnknown(it, {"thresholdDefault", "thresholds", "topK", "symbolMode", "direction"},
                      "interpret");
        get(it, "thresholdDefault", cfg.interpret.thresholds.defaultValue);
        if (it.contains("thresholds")) {
            for (const auto& [k, v] : it["thresholds"].items()) {
                try {
                    cfg.interpret.thresholds.perRole[std::stoi(k)] = v.get<double>();
                } catch (const std::exception&) {
                    throw ConfigError("config: interpret.thresholds keys must be role ids");
                }
            }
        }
        cfg.interpret.thresholds.validate();
        get(it, "topK", cfg.interpret.topK);
        if (cfg.interpret.topK < 1)
            throw ConfigError("config: interpret.topK must be >= 1");
        if (it.contains("symbolMode")) {
            const auto s = it["symbolMode"].get<std::string>();
            if (s == "embedding")
                cfg.interpret.symbolMode = SymbolSimilarityMode::EmbeddedVector;
            else if (s == "rawAttention")
                cfg.interpret.symbolMode = SymbolSimilarityMode::RawAttention;
            else
                throw ConfigError("config: interpret.symbolMode must be embedding or rawAttention");
        }
        if (it.contains("direction")) {
            const auto s = it["direction"].get<std::string>();
            if (s == "forward")
                cfg.interpret.direction = DirectionFilter::Forward;
            else if (s == "backward")
                cfg.interpret.direction = DirectionFilter::Backward;
            else if (s == "both")
                cfg.interpret.direction = DirectionFilter::Both;
            else
                throw ConfigError("config: interpret.direction must be forward, backward or both");
        }
    }

    if (j.contains("gradcheck")) {
        const auto& g = j["gradcheck"];
        rejectUnknown(g, {"h", "tolerance", "batchSequences", "maxLength"}, "gradcheck");
        get(g, "h", cfg.gradcheck.h);
        get(g, "tolerance", cfg.gradcheck.tolerance);
        get(g, "batchSequences", cfg.gradcheck.batchSequences);
        get(g, "maxLength", cfg.gradcheck.maxLength);
        if (cfg.gradcheck.h <= 0.0 || cfg.gradcheck.tolerance <= 0.0)
            throw ConfigError("config: gradcheck.h and gradcheck.tolerance must be positive");
        if (cfg.gradcheck.batchSequences < 1 || cfg.gradcheck.maxLength < 1)
            throw ConfigError("config: gradcheck batch settings must be >= 1");
    }

    if (j.contains("paths")) {
        const auto& p = j["paths"];
        rejectUnknown(p, {"outDir", "embeddings", "grammar", "corpus", "checkpoint", "metrics",
                          "resume"},
                      "paths");
        get(p, "outDir", cfg.paths.outDir);
        get(p, "embeddings", cfg.paths.embeddings);
        get(p, "grammar", cfg.paths.grammar);
        get(p, "corpus", cfg.paths.corpus);
        get(p, "checkpoint", cfg.paths.checkpoint);
        get(p, "metrics", cfg.paths.metrics);
        get(p, "resume", cfg.paths.resume);
    }

    return cfg;
}

void writeRunConfig(const RunConfig& cfg, const std::string& path) {
    json j;
    j["seed"] = cfg.seed;
    j["hyper"] = {{"nSymbols", cfg.hyper.nSymbols},
                  {"nRoles", cfg.hyper.nRoles},
                  {"dSymbols", cfg.hyper.dSymbols},
                  {"dRoles", cfg.hyper.dRoles},
                  {"dWord", cfg.hyper.dWord},
                  {"gateEnabled", cfg.hyper.gateEnabled},
                  {"gatedFeedback", cfg.hyper.gatedFeedback}};
    j["objective"] = {
        {"cQ", cfg.objective.cQ},
        {"taskKind",
         cfg.objective.taskKind == TaskKind::TokenClassification ? "tokenClassification"
                                                                 : "spanPointing"},
        {"qAggregation", cfg.objective.qAggregation == QAggregation::Mean ? "mean" : "sum"},
        {"labelKind", cfg.labelKind == LabelKind::Class  ? "class"
                      : cfg.labelKind == LabelKind::Role ? "role"
                                                         : "joint"}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"batchSize", cfg.train.batchSize},
                  {"rho", cfg.train.rho},
                  {"epsilon", cfg.train.epsilon},
                  {"clipNorm", cfg.train.clipNorm}};
    j["grammar"] = {{"classes", cfg.grammar.classes},
                    {"roles", cfg.grammar.roles},
                    {"vocabPerClass", cfg.grammar.vocabPerClass},
                    {"sequences", cfg.grammar.sequences},
                    {"noiseScale", cfg.grammar.noiseScale},
                    {"extraTemplates", cfg.grammar.extraTemplates},
                    {"plantPolysemy", cfg.grammar.plantPolysemy},
                    {"polysemyProb", cfg.grammar.polysemyProb}};
    json thresholds = json::object();
    for (const auto& [k, v] : cfg.interpret.thresholds.perRole) thresholds[std::to_string(k)] = v;
    j["interpret"] = {
        {"thresholdDefault", cfg.interpret.thresholds.defaultValue},
        {"thresholds", std::move(thresholds)},
        {"topK", cfg.interpret.topK},
        {"symbolMode",
         cfg.interpret.symbolMode == SymbolSimilarityMode::EmbeddedVector ? "embedding"
                                                                          : "rawAttention"},
        {"direction", cfg.interpret.direction == DirectionFilter::Forward    ? "forward"
                      : cfg.interpret.direction == DirectionFilter::Backward ? "backward"
                                                                             : "both"}};
    j["gradcheck"] = {{"h", cfg.gradcheck.h},
                      {"tolerance", cfg.gradcheck.tolerance},
                      {"batchSequences", cfg.gradcheck.batchSequences},
                      {"maxLength", cfg.gradcheck.maxLength}};
    j["paths"] = {{"outDir", cfg.paths.outDir},     {"embeddings", cfg.paths.embeddings},
                  {"grammar", cfg.paths.grammar},   {"corpus", cfg.paths.corpus},
                  {"checkpoint", cfg.paths.checkpoint}, {"metrics", cfg.paths.metrics},
                  {"resume", cfg.paths.resume}};

    std::ofstream out(path);
    if (!out)
        throw IoError("writeRunConfig: cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out)
        throw IoError("writeRunConfig: write failed for " + path);
}

}  // namespace tprn
