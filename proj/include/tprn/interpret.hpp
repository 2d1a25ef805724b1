#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tprn/data.hpp"
#include "tprn/model.hpp"

namespace tprn {

// One token occurrence: raw attentions plus the derived symbol vector
// s = S a_S and the L2-normalized role attention used for clustering.
struct TraceRecord {
    std::string tokenText;
    int exampleId = 0;
    int position = 0;
    Direction direction = Direction::Forward;
    Vector symbolAttention;
    Vector roleAttention;
    Vector symbolVec;                // derived
    Vector roleAttentionNormalized;  // derived
    int goldRole = -1;               // attached from the corpus, not serialized
    int goldClass = -1;
};

struct TraceDump {
    std::vector<TraceRecord> records;
};

// One record per token occurrence per direction across the corpus.
TraceDump dumpTraces(const ModelParams& params, const std::vector<Example>& corpus,
                     const EmbeddingTable& embeddings);

// JSONL, floats with 17 significant digits; derived fields are recomputed
// on read (symbolVec needs the symbol matrix and is left empty without it).
void writeTraceDump(const TraceDump& dump, const std::string& path);
TraceDump readTraceDump(const std::string& path, const Matrix* symbolEmbeddings = nullptr);

void attachGold(TraceDump& dump, const std::vector<Example>& corpus);

struct RoleThresholds {
    double defaultValue = 0.5;
    std::map<int, double> perRole;

    double of(int role) const {
        auto it = perRole.find(role);
        return it == perRole.end() ? defaultValue : it->second;
    }
    void validate() const;
};

// Occurrences whose normalized role attention exceeds the role's threshold.
// An occurrence may land in several roles or none.
struct RoleAssignment {
    int roleId = 0;
    double threshold = 0.5;
    std::vector<int> members;  // record indices into the dump
};

enum class DirectionFilter { Forward, Backward, Both };

std::vector<RoleAssignment> assignRoles(const TraceDump& dump, const RoleThresholds& thresholds,
                                        DirectionFilter dir = DirectionFilter::Forward);

// The written procedure compares a_S to symbol embeddings, which is
// dimensionally inconsistent; the default mode compares s = S a_S to the
// columns of S. RawAttention implements the literal reading (cosine of a_S
// against one-hot symbol indicators).
enum class SymbolSimilarityMode { EmbeddedVector, RawAttention };

struct SymbolEntry {
    std::string token;
    double similarity = 0.0;
    int recordIndex = -1;
    bool operator==(const SymbolEntry&) const = default;
};

struct SymbolAssignment {
    std::vector<int> assignedSymbol;  // per record; -1 when filtered out
    std::vector<double> similarity;
    std::vector<std::vector<SymbolEntry>> topTokens;  // per symbol, type-deduplicated
};

SymbolAssignment assignSymbols(const TraceDump& dump, const Matrix& symbolEmbeddings,
                               int topK = 30,
                               SymbolSimilarityMode mode = SymbolSimilarityMode::EmbeddedVector,
                               DirectionFilter dir = DirectionFilter::Forward);

// Empirical conditional frequencies from (cluster, label) memberships.
struct PurityReport {
    std::map<int, std::map<std::string, int>> counts;
    std::map<int, std::map<std::string, double>> pLabelGivenCluster;
    std::map<std::string, std::map<int, double>> pClusterGivenLabel;
    int totalCount = 0;

    std::string majorityLabel(int cluster) const;
    double majorityShare(int cluster) const;
    bool operator==(const PurityReport&) const = default;
};

PurityReport purity(const std::vector<std::pair<int, std::string>>& memberships);

// contexts x symbols occurrence counts for one word form
struct PolysemyTable {
    std::string word;
    std::vector<std::string> contextLabels;
    std::vector<int> symbolIds;
    std::vector<std::vector<int>> counts;  // [context][symbol]
    int total = 0;

    int majoritySymbol(std::size_t contextRow) const;
    bool operator==(const PolysemyTable&) const = default;
};

using ContextLabeler = std::function<std::string(const TraceRecord&)>;

PolysemyTable polysemyTable(const std::string& word, const TraceDump& dump,
                            const SymbolAssignment& symbols, const ContextLabeler& labeler);

struct SymbolClusterSummary {
    int symbolId = 0;
    int occurrences = 0;
    std::vector<SymbolEntry> topTokens;
    bool operator==(const SymbolClusterSummary&) const = default;
};

struct OnehotnessStats {
    double meanMaxComponent = 0.0;
    double meanQ = 0.0;
    double meanMaxSymbol = 0.0;
    double meanMaxRole = 0.0;
    bool operator==(const OnehotnessStats&) const = default;
};

struct InterpretationReport {
    OnehotnessStats attention;
    std::vector<RoleAssignment> roles;
    PurityReport rolePurity;
    std::vector<SymbolClusterSummary> symbols;
    PurityReport symbolPurity;
    std::vector<PolysemyTable> polysemy;

    bool operator==(const InterpretationReport&) const;
};

inline bool operator==(const RoleAssignment& a, const RoleAssignment& b) {
    return a.roleId == b.roleId && a.threshold == b.threshold && a.members == b.members;
}

enum class ReportFormat { Json, Csv };

// Deterministic serialization; reading back yields an equal report. The CSV
// layout is sectioned and requires comma-free token text.
void writeReport(const InterpretationReport& report, const std::string& path, ReportFormat fmt);
InterpretationReport readReport(const std::string& path, ReportFormat fmt);

}  // namespace tprn
