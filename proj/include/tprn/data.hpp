#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tprn/linalg.hpp"

namespace tprn {

struct EmbeddingTable {
    std::unordered_map<std::string, int> index;  // token -> row
    std::vector<std::string> tokens;             // row -> token
    Matrix vectors;                              // |V| x dWord

    int dWord() const { return static_cast<int>(vectors.cols()); }
    int size() const { return static_cast<int>(tokens.size()); }
    Vector row(int i) const;
    int lookup(const std::string& token) const;  // -1 when absent
};

// GloVe text layout: one line per token, token followed by dWord decimals.
// dWord is inferred from the first line; a ragged line is a parse error
// naming the line; duplicate tokens keep the last occurrence with a warning.
EmbeddingTable loadEmbeddings(const std::string& path);

// 17-significant-digit text, reload is bitwise identical
void saveEmbeddings(const EmbeddingTable& table, const std::string& path);

struct LexicalClass {
    int id = 0;
    std::vector<std::string> words;
};

// Fixed class sequence with a role per position.
struct RoleTemplate {
    std::vector<int> classSeq;
    std::vector<int> roleSeq;
};

// One word form sampled by a second class besides its home class, so the
// same surface token occurs in two lexical categories.
struct PolysemyPlant {
    std::string word;
    int homeClass = 0;
    int guestClass = 0;
    double prob = 0.25;  // chance the planted word is drawn when either class is sampled
};

struct SyntheticGrammar {
    int classCount = 0;
    int roleCount = 0;
    std::uint64_t seed = 0;
    std::vector<LexicalClass> lexicalClasses;
    std::vector<RoleTemplate> roleTemplates;
    std::optional<PolysemyPlant> polysemy;
    EmbeddingTable embeddings;  // synthetic, class-separable
};

struct GrammarOptions {
    int dWord = 24;
    double noiseScale = 0.08;
    int extraTemplates = 8;  // seeded variety on top of the covering base set
    bool plantPolysemy = false;
    double polysemyProb = 0.25;
};

// Deterministic in seed. Word embeddings are class centroid + noise, so
// classes are linearly separable; each class is scheduled into two distinct
// roles across the template set (one when roleCount == 1).
SyntheticGrammar genGrammar(std::uint64_t seed, int classCount, int roleCount,
                            int vocabPerClass, const GrammarOptions& opts = {});

struct Example {
    std::vector<int> tokens;  // embedding-table rows
    std::vector<int> goldRoles;
    std::vector<int> goldClasses;
    std::optional<std::pair<int, int>> span;
};

std::vector<Example> genCorpus(const SyntheticGrammar& grammar, int n, std::uint64_t seed);

void writeCorpusJsonl(const std::vector<Example>& corpus, const std::string& path);
std::vector<Example> readCorpusJsonl(const std::string& path);

void writeGrammarJson(const SyntheticGrammar& grammar, const std::string& path);
// Embeddings live in their own file; pass the loaded table in.
SyntheticGrammar readGrammarJson(const std::string& path, EmbeddingTable embeddings);

// (exampleId, position) -> tag, from TSV rows "exampleId<TAB>position<TAB>tag"
struct PosAnnotation {
    std::map<std::pair<int, int>, std::string> tags;
};

PosAnnotation loadPos(const std::string& path, const std::vector<Example>& corpus);

}  // namespace tprn
