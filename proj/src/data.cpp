#include "tprn/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "tprn/rng.hpp"

namespace tprn {

using nlohmann::json;

Vector EmbeddingTable::row(int i) const {
    if (i < 0 || i >= size())
        throw InputError("EmbeddingTable: row " + std::to_string(i) + " out of range");
    Vector v(vectors.cols());
    for (std::size_t j = 0; j < vectors.cols(); ++j) v[j] = vectors(static_cast<std::size_t>(i), j);
    return v;
}

int EmbeddingTable::lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? -1 : it->second;
}

EmbeddingTable loadEmbeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("loadEmbeddings: cannot open " + path);

    std::vector<std::string> tokens;
    std::vector<Vector> rows;
    std::unordered_map<std::string, int> index;
    std::size_t dWord = 0;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        Vector vals;
        double x = 0.0;
        while (ss >> x) vals.push_back(x);
        if (!ss.eof())
            throw IoError("loadEmbeddings: bad number at line " + std::to_string(lineNo));
        if (vals.empty())
            throw IoError("loadEmbeddings: no values at line " + std::to_string(lineNo));
        if (dWord == 0) dWord = vals.size();
        if (vals.size() != dWord)
            throw IoError("loadEmbeddings: line " + std::to_string(lineNo) + " has " +
                          std::to_string(vals.size()) + " values, expected " + std::to_string(dWord));
        auto it = index.find(token);
        if (it != index.end()) {
            std::cerr << "loadEmbeddings: duplicate token '" << token << "' at line " << lineNo
                      << ", keeping last\n";
            rows[static_cast<std::size_t>(it->second)] = std::move(vals);
        } else {
            index.emplace(token, static_cast<int>(tokens.size()));
            tokens.push_back(token);
            rows.push_back(std::move(vals));
        }
    }
    if (tokens.empty())
        throw InputError("loadEmbeddings: empty file " + path);

    EmbeddingTable t;
    t.index = std::move(index);
    t.tokens = std::move(tokens);
    t.vectors = Matrix(t.tokens.size(), dWord);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < dWord; ++j) t.vectors(i, j) = rows[i][j];
    return t;
}

void saveEmbeddings(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("saveEmbeddings: cannot write " + path);
    char buf[64];
    for (int i = 0; i < table.size(); ++i) {
        out << table.tokens[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < table.vectors.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", table.vectors(static_cast<std::size_t>(i), j));
            out << ' ' << buf;
        }
        out << '\n';
    }
    if (!out)
        throw IoError("saveEmbeddings: write failed for " + path);
}

namespace {

// Two roles per class, every role covered, balanced when classCount is a
// multiple of roleCount.
std::pair<int, int> classRoles(int c, int roleCount) {
    const int pA = c % roleCount;
    if (roleCount == 1) return {0, 0};
    const int offset = 1 + (c / roleCount) % (roleCount - 1);
    return {pA, (pA + offset) % roleCount};
}

std::string wordName(int classId, int wordId) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%02d_w%02d", classId, wordId);
    return buf;
}

}  // namespace

SyntheticGrammar genGrammar(std::uint64_t seed, int classCount, int roleCount,
                            int vocabPerClass, const GrammarOptions& opts) {
    if (classCount < 1 || roleCount < 1 || vocabPerClass < 1)
        throw ConfigError("genGrammar: classCount, roleCount, vocabPerClass must all be >= 1");
    if (classCount > opts.dWord)
        throw ConfigError("genGrammar: need dWord >= classCount for separable centroids (" +
                          std::to_string(classCount) + " > " + std::to_string(opts.dWord) + ")");

    SyntheticGrammar g;
    g.classCount = classCount;
    g.roleCount = roleCount;
    g.seed = seed;

    Rng rng(Rng::deriveSeed(seed, 11));

    // orthonormal class centroids via Gram-Schmidt on gaussian draws
    std::vector<Vector> centroids;
    centroids.reserve(static_cast<std::size_t>(classCount));
    while (static_cast<int>(centroids.size()) < classCount) {
        Vector v(static_cast<std::size_t>(opts.dWord));
        for (auto& x : v) x = rng.normal();
        for (const auto& c : centroids) addScaled(v, c, -dot(v, c));
        const double n = norm2(v);
        if (n < 1e-8) continue;  // re-draw, degenerate direction
        for (auto& x : v) x /= n;
        centroids.push_back(std::move(v));
    }

    // word lists and embeddings; the planted polysemous word (if any) is
    // word 0 of its home class, renamed so it stands out in reports
    std::optional<PolysemyPlant> plant;
    int homeClass = -1, guestClass = -1;
    if (opts.plantPolysemy && classCount >= 2) {
        // pick two classes sharing a role slot so only context can separate them
        homeClass = 0;
        guestClass = -1;
        const auto [hA, hB] = classRoles(homeClass, roleCount);
        for (int c = 1; c < classCount; ++c) {
            const auto [cA, cB] = classRoles(c, roleCount);
            if (cA == hA || cA == hB || cB == hA || cB == hB) {
                guestClass = c;
                break;
            }
        }
        if (guestClass < 0) guestClass = 1;
        plant = PolysemyPlant{"poly", homeClass, guestClass, opts.polysemyProb};
    }

    EmbeddingTable table;
    std::vector<Vector> rows;
    for (int c = 0; c < classCount; ++c) {
        LexicalClass lc;
        lc.id = c;
        for (int w = 0; w < vocabPerClass; ++w) {
            const bool isPlant = plant && c == homeClass && w == 0;
            std::string name = isPlant ? plant->word : wordName(c, w);
            Vector v(static_cast<std::size_t>(opts.dWord));
            if (isPlant) {
                for (std::size_t j = 0; j < v.size(); ++j)
                    v[j] = 0.5 * (centroids[static_cast<std::size_t>(homeClass)][j] +
                                  centroids[static_cast<std::size_t>(guestClass)][j]) +
                           opts.noiseScale * rng.normal();
            } else {
                for (std::size_t j = 0; j < v.size(); ++j)
                    v[j] = centroids[static_cast<std::size_t>(c)][j] + opts.noiseScale * rng.normal();
            }
            table.index.emplace(name, static_cast<int>(table.tokens.size()));
            table.tokens.push_back(name);
            rows.push_back(std::move(v));
            lc.words.push_back(std::move(name));
        }
        g.lexicalClasses.push_back(std::move(lc));
    }
    table.vectors = Matrix(table.tokens.size(), static_cast<std::size_t>(opts.dWord));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) table.vectors(i, j) = rows[i][j];
    g.embeddings = std::move(table);
    g.polysemy = plant;

    // classes allowed at each role slot
    std::vector<std::vector<int>> allowed(static_cast<std::size_t>(roleCount));
    for (int c = 0; c < classCount; ++c) {
        const auto [pA, pB] = classRoles(c, roleCount);
        allowed[static_cast<std::size_t>(pA)].push_back(c);
        if (pB != pA) allowed[static_cast<std::size_t>(pB)].push_back(c);
    }
    for (auto& a : allowed)
        if (a.empty()) a.push_back(0);  // only reachable for classCount < roleCount

    // base templates: full length, round-robin through the allowed classes
    // so every (class, role) pairing occurs at least once
    std::size_t maxAllowed = 1;
    for (const auto& a : allowed) maxAllowed = std::max(maxAllowed, a.size());
    for (std::size_t r = 0; r < maxAllowed; ++r) {
        RoleTemplate t;
        for (int p = 0; p < roleCount; ++p) {
            const auto& a = allowed[static_cast<std::size_t>(p)];
            t.classSeq.push_back(a[r % a.size()]);
            t.roleSeq.push_back(p);
        }
        g.roleTemplates.push_back(std::move(t));
    }
    // variety templates: shorter prefixes with random allowed classes
    const int minLen = std::min(2, roleCount);
    for (int e = 0; e < opts.extraTemplates; ++e) {
        const int len = std::max(minLen, roleCount - static_cast<int>(rng.index(3)));
        RoleTemplate t;
        for (int p = 0; p < len; ++p) {
            const auto& a = allowed[static_cast<std::size_t>(p)];
            t.classSeq.push_back(a[rng.index(a.size())]);
            t.roleSeq.push_back(p);
        }
        g.roleTemplates.push_back(std::move(t));
    }
    return g;
}

std::vector<Example> genCorpus(const SyntheticGrammar& grammar, int n, std::uint64_t seed) {
    if (n < 1)
        throw ConfigError("genCorpus: n must be >= 1");
    if (grammar.roleTemplates.empty())
        throw ConfigError("genCorpus: grammar has no templates");

    Rng rng(Rng::deriveSeed(seed, 23));
    std::vector<Example> corpus;
    corpus.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& t = grammar.roleTemplates[rng.index(grammar.roleTemplates.size())];
        Example ex;
        const int len = static_cast<int>(t.classSeq.size());
        for (int p = 0; p < len; ++p) {
            const int c = t.classSeq[static_cast<std::size_t>(p)];
            const auto& lc = grammar.lexicalClasses[static_cast<std::size_t>(c)];
            std::string token;
            const auto& plant = grammar.polysemy;
            if (plant && (c == plant->homeClass || c == plant->guestClass) &&
                rng.uniform01() < plant->prob) {
                token = plant->word;
            } else {
                token = lc.words[rng.index(lc.words.size())];
                if (plant && c == plant->homeClass && token == plant->word)
                    token = lc.words[1 % lc.words.size()];
            }
            const int row = grammar.embeddings.lookup(token);
            if (row < 0)
                throw ConfigError("genCorpus: token '" + token + "' missing from embeddings");
            ex.tokens.push_back(row);
            ex.goldClasses.push_back(c);
            ex.goldRoles.push_back(t.roleSeq[static_cast<std::size_t>(p)]);
        }
        const int start = static_cast<int>(rng.index(static_cast<std::size_t>(len)));
        const int end = start + static_cast<int>(rng.index(static_cast<std::size_t>(len - start)));
        ex.span = std::make_pair(start, end);
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

void writeCorpusJsonl(const std::vector<Example>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("writeCorpusJsonl: cannot write " + path);
    for (const auto& ex : corpus) {
        json j;
        j["tokens"] = ex.tokens;
        j["goldRoles"] = ex.goldRoles;
        j["goldClasses"] = ex.goldClasses;
        if (ex.span) j["span"] = {ex.span->first, ex.span->second};
        out << j.dump() << '\n';
    }
    if (!out)
        throw IoError("writeCorpusJsonl: write failed for " + path);
}

std::vector<Example> readCorpusJsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("readCorpusJsonl: cannot open " + path);
    std::vector<Example> corpus;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("readCorpusJsonl: line " + std::to_string(lineNo) + ": " + e.what());
        }
        Example ex;
        ex.tokens = j.at("tokens").get<std::vector<int>>();
        ex.goldRoles = j.at("goldRoles").get<std::vector<int>>();
        ex.goldClasses = j.at("goldClasses").get<std::vector<int>>();
        if (j.contains("span")) {
            auto s = j["span"].get<std::vector<int>>();
            if (s.size() != 2)
                throw IoError("readCorpusJsonl: line " + std::to_string(lineNo) + ": bad span");
            ex.span = std::make_pair(s[0], s[1]);
        }
        if (ex.tokens.size() != ex.goldRoles.size() || ex.tokens.size() != ex.goldClasses.size())
            throw IoError("readCorpusJsonl: line " + std::to_string(lineNo) + ": ragged example");
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

void writeGrammarJson(const SyntheticGrammar& grammar, const std::string& path) {
    json j;
    j["classCount"] = grammar.classCount;
    j["roleCount"] = grammar.roleCount;
    j["seed"] = grammar.seed;
    json classes = json::array();
    for (const auto& lc : grammar.lexicalClasses)
        classes.push_back({{"id", lc.id}, {"words", lc.words}});
    j["classes"] = std::move(classes);
    json templates = json::array();
    for (const auto& t : grammar.roleTemplates)
        templates.push_back({{"classes", t.classSeq}, {"roles", t.roleSeq}});
    j["templates"] = std::move(templates);
    if (grammar.polysemy) {
        j["polysemy"] = {{"word", grammar.polysemy->word},
                         {"homeClass", grammar.polysemy->homeClass},
                         {"guestClass", grammar.polysemy->guestClass},
                         {"prob", grammar.polysemy->prob}};
    }
    std::ofstream out(path);
    if (!out)
        throw IoError("writeGrammarJson: cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out)
        throw IoError("writeGrammarJson: write failed for " + path);
}

SyntheticGrammar readGrammarJson(const std::string& path, EmbeddingTable embeddings) {
    std::ifstream in(path);
    if (!in)
        throw IoError("readGrammarJson: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("readGrammarJson: " + path + ": " + e.what());
    }
    SyntheticGrammar g;
    g.classCount = j.at("classCount").get<int>();
    g.roleCount = j.at("roleCount").get<int>();
    g.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& c : j.at("classes")) {
        LexicalClass lc;
        lc.id = c.at("id").get<int>();
        lc.words = c.at("words").get<std::vector<std::string>>();
        g.lexicalClasses.push_back(std::move(lc));
    }
    for (const auto& t : j.at("templates")) {
        RoleTemplate rt;
        rt.classSeq = t.at("classes").get<std::vector<int>>();
        rt.roleSeq = t.at("roles").get<std::vector<int>>();
        g.roleTemplates.push_back(std::move(rt));
    }
    if (j.contains("polysemy")) {
        PolysemyPlant p;
        p.word = j["polysemy"].at("word").get<std::string>();
        p.homeClass = j["polysemy"].at("homeClass").get<int>();
        p.guestClass = j["polysemy"].at("guestClass").get<int>();
        p.prob = j["polysemy"].at("prob").get<double>();
        g.polysemy = std::move(p);
    }
    g.embeddings = std::move(embeddings);
    return g;
}

PosAnnotation loadPos(const std::string& path, const std::vector<Example>& corpus) {
    std::ifstream in(path);
    if (!in)
        throw IoError("loadPos: cannot open " + path);
    PosAnnotation ann;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string exField, posField, tag;
        if (!std::getline(ss, exField, '\t') || !std::getline(ss, posField, '\t') ||
            !std::getline(ss, tag))
            throw InputError("loadPos: row " + std::to_string(lineNo) + ": expected 3 tab-separated fields");
        int exampleId = 0, position = 0;
        try {
            exampleId = std::stoi(exField);
            position = std::stoi(posField);
        } catch (const std::exception&) {
            throw InputError("loadPos: row " + std::to_string(lineNo) + ": non-numeric id or position");
        }
        if (exampleId < 0 || exampleId >= static_cast<int>(corpus.size()))
            throw InputError("loadPos: row " + std::to_string(lineNo) + ": exampleId " +
                             std::to_string(exampleId) + " out of range");
        const auto len = corpus[static_cast<std::size_t>(exampleId)].tokens.size();
        if (position < 0 || position >= static_cast<int>(len))
            throw InputError("loadPos: row " + std::to_string(lineNo) + ": position " +
                             std::to_string(position) + " out of range for example " +
                             std::to_string(exampleId));
        ann.tags[{exampleId, position}] = tag;
    }
    return ann;
}

}  // namespace tprn
